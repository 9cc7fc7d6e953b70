/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        assert!(n < u32::MAX as usize);
        Self { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Resets to singletons without reallocating.
    pub fn reset(&mut self) {
        for (i, p) in self.parent.iter_mut().enumerate() {
            *p = i as u32;
        }
        self.size.fill(1);
    }

    #[inline]
    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let gp = self.parent[self.parent[x] as usize];
            self.parent[x] = gp;
            x = gp as usize;
        }
        x
    }

    /// Merges the sets of `a` and `b`; returns false if already joined.
    #[inline]
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
        true
    }

    /// [`find`](Self::find) recording every overwritten parent in `log`.
    #[inline]
    fn find_logged(&mut self, mut x: usize, log: &mut Vec<(u32, u32, u32)>) -> usize {
        while self.parent[x] as usize != x {
            let gp = self.parent[self.parent[x] as usize];
            log.push((x as u32, self.parent[x], self.size[x]));
            self.parent[x] = gp;
            x = gp as usize;
        }
        x
    }

    /// [`union`](Self::union) recording every overwritten entry in `log`, so
    /// that [`rollback`](Self::rollback) can restore the earlier state.
    #[inline]
    pub fn union_logged(&mut self, a: usize, b: usize, log: &mut Vec<(u32, u32, u32)>) -> bool {
        let (mut ra, mut rb) = (self.find_logged(a, log), self.find_logged(b, log));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        log.push((rb as u32, self.parent[rb], self.size[rb]));
        log.push((ra as u32, self.parent[ra], self.size[ra]));
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
        true
    }

    pub fn same_logged(&mut self, a: usize, b: usize, log: &mut Vec<(u32, u32, u32)>) -> bool {
        self.find_logged(a, log) == self.find_logged(b, log)
    }

    /// Undoes logged writes, newest first, and clears the log. Only valid
    /// when every mutation since the log was started went through a logged
    /// operation.
    pub fn rollback(&mut self, log: &mut Vec<(u32, u32, u32)>) {
        while let Some((x, p, s)) = log.pop() {
            self.parent[x as usize] = p;
            self.size[x as usize] = s;
        }
    }

    pub fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }

    pub fn set_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r] as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rollback_restores_partition() {
        let mut uf = UnionFind::new(10);
        uf.union(0, 1);
        uf.union(2, 3);
        let before = (uf.parent.clone(), uf.size.clone());
        let mut log = Vec::new();
        uf.union_logged(1, 2, &mut log);
        uf.union_logged(5, 9, &mut log);
        uf.union_logged(9, 3, &mut log);
        assert!(uf.same_logged(0, 5, &mut log));
        uf.rollback(&mut log);
        assert!(log.is_empty());
        assert_eq!((uf.parent.clone(), uf.size.clone()), before);
    }

    proptest! {
        #[test]
        fn agrees_with_naive_labels(ops in proptest::collection::vec((0usize..30, 0usize..30), 0..60)) {
            let mut uf = UnionFind::new(30);
            let mut label: Vec<usize> = (0..30).collect();
            for (a, b) in ops {
                uf.union(a, b);
                let (la, lb) = (label[a], label[b]);
                for l in label.iter_mut() {
                    if *l == lb {
                        *l = la;
                    }
                }
            }
            for a in 0..30 {
                for b in 0..30 {
                    prop_assert_eq!(uf.same(a, b), label[a] == label[b]);
                }
                prop_assert_eq!(uf.set_size(a), label.iter().filter(|&&l| l == label[a]).count());
            }
        }
    }
}
