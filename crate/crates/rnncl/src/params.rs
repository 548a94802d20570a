//! Flat parameter vectors with named, shaped views.
//!
//! All trainable state lives in one `Vec<f64>` per component; a `Layout`
//! names contiguous slices of it as matrices ("w_hh", "head_w_0", ...).
//! Optimizers and penalties work on the flat vector; model code works on
//! the views. Task-shared views always come first, so "the shared
//! parameters" is just the prefix `0..layout.shared_len()`.

use crate::error::{Error, Result};
use crate::mat::Mat;

#[derive(Debug, Clone, PartialEq)]
pub struct ViewSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// Names and shapes of the views tiling a parameter vector, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    views: Vec<ViewSpec>,
    offsets: Vec<usize>,
    total: usize,
    /// Number of leading views shared across tasks; the rest are per-task.
    shared_views: usize,
}

impl Layout {
    pub fn new(views: Vec<ViewSpec>, shared_views: usize) -> Result<Self> {
        if shared_views > views.len() {
            return Err(Error::Invalid(format!(
                "{} shared views declared but only {} views",
                shared_views,
                views.len()
            )));
        }
        let mut offsets = Vec::with_capacity(views.len());
        let mut total = 0usize;
        for v in &views {
            offsets.push(total);
            total += v.rows * v.cols;
        }
        Ok(Layout { views, offsets, total, shared_views })
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn spec(&self, idx: usize) -> &ViewSpec {
        &self.views[idx]
    }

    pub fn offset(&self, idx: usize) -> usize {
        self.offsets[idx]
    }

    pub fn view_len(&self, idx: usize) -> usize {
        self.views[idx].rows * self.views[idx].cols
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.views.iter().position(|v| v.name == name)
    }

    /// Length of the task-shared prefix of the flat vector.
    pub fn shared_len(&self) -> usize {
        if self.shared_views == 0 {
            0
        } else {
            self.offsets[self.shared_views - 1] + self.view_len(self.shared_views - 1)
        }
    }

    pub fn shared_view_count(&self) -> usize {
        self.shared_views
    }

    pub fn views(&self) -> impl Iterator<Item = (usize, &ViewSpec)> {
        self.views.iter().enumerate()
    }

    /// Which view a flat index falls into; for error messages.
    pub fn view_of_index(&self, idx: usize) -> Option<&ViewSpec> {
        if idx >= self.total {
            return None;
        }
        let pos = match self.offsets.binary_search(&idx) {
            Ok(p) => p,
            Err(p) => p - 1,
        };
        Some(&self.views[pos])
    }
}

/// A flat parameter vector tiled by a `Layout`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub layout: Layout,
    pub data: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: Layout) -> Self {
        let data = vec![0.0; layout.total_len()];
        ParamVector { layout, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn view(&self, idx: usize) -> &[f64] {
        let off = self.layout.offset(idx);
        &self.data[off..off + self.layout.view_len(idx)]
    }

    pub fn view_mut(&mut self, idx: usize) -> &mut [f64] {
        let off = self.layout.offset(idx);
        let len = self.layout.view_len(idx);
        &mut self.data[off..off + len]
    }

    pub fn view_by_name(&self, name: &str) -> Result<&[f64]> {
        let idx = self
            .layout
            .index_of(name)
            .ok_or_else(|| Error::Invalid(format!("no view named {:?}", name)))?;
        Ok(self.view(idx))
    }

    /// Copy a view out as a matrix (e.g. to seed a tape leaf).
    pub fn view_mat(&self, idx: usize) -> Mat {
        let s = self.layout.spec(idx);
        Mat { rows: s.rows, cols: s.cols, data: self.view(idx).to_vec() }
    }

    pub fn set_view(&mut self, idx: usize, m: &Mat) -> Result<()> {
        let s = self.layout.spec(idx);
        if (s.rows, s.cols) != m.shape() {
            return Err(Error::Shape(format!(
                "set_view {:?}: {}x{} into {}x{}",
                s.name, m.rows, m.cols, s.rows, s.cols
            )));
        }
        self.view_mut(idx).copy_from_slice(&m.data);
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout3() -> Layout {
        Layout::new(
            vec![
                ViewSpec { name: "a".into(), rows: 2, cols: 3 },
                ViewSpec { name: "b".into(), rows: 1, cols: 4 },
                ViewSpec { name: "head_0".into(), rows: 2, cols: 2 },
            ],
            2,
        )
        .unwrap()
    }

    #[test]
    fn offsets_and_shared_prefix() {
        let l = layout3();
        assert_eq!(l.total_len(), 6 + 4 + 4);
        assert_eq!(l.offset(1), 6);
        assert_eq!(l.shared_len(), 10);
        assert_eq!(l.index_of("head_0"), Some(2));
        assert_eq!(l.view_of_index(7).unwrap().name, "b");
        assert_eq!(l.view_of_index(10).unwrap().name, "head_0");
        assert!(l.view_of_index(14).is_none());
    }

    #[test]
    fn view_roundtrip() {
        let mut p = ParamVector::zeros(layout3());
        let m = Mat::from_vec(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        p.set_view(1, &m).unwrap();
        assert_eq!(p.view_mat(1), m);
        assert_eq!(p.view_by_name("b").unwrap(), &[1.0, 2.0, 3.0, 4.0]);
        // Wrong shape rejected.
        assert!(p.set_view(0, &m).is_err());
    }
}
