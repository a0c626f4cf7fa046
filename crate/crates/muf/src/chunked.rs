//! Append-only vector with cheap clones: elements live in fixed-size chunks
//! shared between clones and copied on first write.

use std::ops::Index;
use std::sync::Arc;

const CHUNK: usize = 64;

#[derive(Debug, Clone)]
pub struct ChunkedVec<T> {
    chunks: Vec<Arc<Vec<T>>>,
    len: usize,
}

impl<T> Default for ChunkedVec<T> {
    fn default() -> Self {
        ChunkedVec { chunks: Vec::new(), len: 0 }
    }
}

impl<T: Clone> ChunkedVec<T> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> Option<&T> {
        if i < self.len {
            Some(&self.chunks[i / CHUNK][i % CHUNK])
        } else {
            None
        }
    }

    pub fn push_back(&mut self, x: T) {
        if self.len % CHUNK == 0 {
            self.chunks.push(Arc::new(Vec::with_capacity(CHUNK)));
        }
        Arc::make_mut(self.chunks.last_mut().unwrap()).push(x);
        self.len += 1;
    }

    pub fn set(&mut self, i: usize, x: T) {
        assert!(i < self.len, "index {i} out of bounds");
        Arc::make_mut(&mut self.chunks[i / CHUNK])[i % CHUNK] = x;
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.chunks.iter().flat_map(|c| c.iter())
    }

    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len);
        let mut out = ChunkedVec::default();
        for x in self.iter().take(n) {
            out.push_back(x.clone());
        }
        out
    }
}

impl<T: Clone> Index<usize> for ChunkedVec<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        self.get(i).expect("index out of bounds")
    }
}

impl<T: Clone + PartialEq> PartialEq for ChunkedVec<T> {
    fn eq(&self, other: &Self) -> bool {
        self.len == other.len && self.iter().eq(other.iter())
    }
}

impl<T: Clone + Eq> Eq for ChunkedVec<T> {}

impl<T: Clone> FromIterator<T> for ChunkedVec<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut out = ChunkedVec::default();
        for x in iter {
            out.push_back(x);
        }
        out
    }
}
