use std::collections::HashSet;

/// Memorization baseline: a pair scores 1 iff it appeared in any snapshot
/// added so far.
#[derive(Clone, Debug, Default)]
pub struct EdgeBank {
    memory: HashSet<(usize, usize)>,
}

impl EdgeBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, edges: impl IntoIterator<Item = (usize, usize)>) {
        self.memory.extend(edges);
    }

    pub fn contains(&self, src: usize, dst: usize) -> bool {
        self.memory.contains(&(src, dst))
    }

    pub fn predict(&self, pairs: &[(usize, usize)]) -> Vec<f64> {
        pairs
            .iter()
            .map(|&(s, d)| if self.contains(s, d) { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.memory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memory.is_empty()
    }
}
