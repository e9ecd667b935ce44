use serde::{Deserialize, Serialize};

/// A contiguous run of parameters owned by one site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub site: String,
    pub start: usize,
    pub len: usize,
    /// Values are clamped into this range after every optimizer step.
    pub clamp: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    pub values: Vec<f64>,
    pub segments: Vec<Segment>,
    pub adam: AdamState,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a run of parameters and returns the index of the first.
    pub fn alloc(&mut self, site: &str, init: &[f64], clamp: Option<(f64, f64)>) -> usize {
        let start = self.values.len();
        self.values.extend_from_slice(init);
        self.adam.m.resize(self.values.len(), 0.0);
        self.adam.v.resize(self.values.len(), 0.0);
        self.segments.push(Segment {
            site: site.to_string(),
            start,
            len: init.len(),
            clamp,
        });
        start
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Owning site and index within that site's parameters.
    pub fn owner(&self, index: usize) -> Option<(&str, usize)> {
        let pos = self.segments.partition_point(|s| s.start + s.len <= index);
        let seg = self.segments.get(pos)?;
        (index >= seg.start && seg.len > 0).then(|| (seg.site.as_str(), index - seg.start))
    }

    pub fn apply_clamps(&mut self) {
        for s in &self.segments {
            if let Some((lo, hi)) = s.clamp {
                for v in &mut self.values[s.start..s.start + s.len] {
                    *v = v.clamp(lo, hi);
                }
            }
        }
    }

    pub fn reset_optimizer(&mut self) {
        self.adam = AdamState {
            m: vec![0.0; self.values.len()],
            v: vec![0.0; self.values.len()],
            t: 0,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn owners_cover_every_index_once() {
        let mut p = ParamStore::new();
        p.alloc("a", &[0.0; 3], None);
        p.alloc("b", &[0.0; 2], Some((0.0, 1.0)));
        let owners: Vec<_> = (0..5).map(|i| p.owner(i).unwrap()).collect();
        assert_eq!(owners, [("a", 0), ("a", 1), ("a", 2), ("b", 0), ("b", 1)]);
        assert_eq!(p.owner(5), None);
    }

    #[test]
    fn clamps_apply_per_segment() {
        let mut p = ParamStore::new();
        p.alloc("free", &[5.0], None);
        p.alloc("t", &[1.5, -0.2], Some((0.0, 1.0)));
        p.apply_clamps();
        assert_eq!(p.values, [5.0, 1.0, 0.0]);
    }
}
