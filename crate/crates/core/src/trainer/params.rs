//! f64 parameter cells backed by atomic bit storage.
//!
//! The training loop applies updates from one or many workers without locks
//! (word2vec-style asynchronous updates). All accesses use relaxed ordering:
//! on a single thread this is exactly sequential f64 arithmetic, which is
//! what the deterministic mode relies on. Under multiple workers individual
//! reads and writes stay tear-free but interleavings are unordered, so
//! bit-reproducibility is explicitly not guaranteed there.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::model::{DseModel, Matrix};

pub(crate) struct CellVec {
    cells: Vec<AtomicU64>,
}

impl CellVec {
    pub fn from_slice(xs: &[f64]) -> CellVec {
        CellVec {
            cells: xs.iter().map(|x| AtomicU64::new(x.to_bits())).collect(),
        }
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        f64::from_bits(self.cells[i].load(Ordering::Relaxed))
    }

    #[inline]
    pub fn set(&self, i: usize, v: f64) {
        self.cells[i].store(v.to_bits(), Ordering::Relaxed);
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn read_into(&self, buf: &mut [f64]) {
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = self.get(i);
        }
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(self.len(), v.len());
        let mut acc = 0.0;
        for (cell, x) in self.cells.iter().zip(v) {
            acc += f64::from_bits(cell.load(Ordering::Relaxed)) * x;
        }
        acc
    }

    /// self[i] += scale * v[i]
    pub fn add_scaled(&self, v: &[f64], scale: f64) {
        for (cell, x) in self.cells.iter().zip(v) {
            let cur = f64::from_bits(cell.load(Ordering::Relaxed));
            cell.store((cur + scale * x).to_bits(), Ordering::Relaxed);
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }
}

pub(crate) struct CellMatrix {
    cols: usize,
    cells: Vec<AtomicU64>,
}

impl CellMatrix {
    pub fn from_matrix(m: &Matrix) -> CellMatrix {
        CellMatrix {
            cols: m.cols(),
            cells: m
                .data()
                .iter()
                .map(|x| AtomicU64::new(x.to_bits()))
                .collect(),
        }
    }

    #[inline]
    fn row_cells(&self, r: usize) -> &[AtomicU64] {
        &self.cells[r * self.cols..(r + 1) * self.cols]
    }

    pub fn read_row(&self, r: usize, buf: &mut [f64]) {
        for (slot, cell) in buf.iter_mut().zip(self.row_cells(r)) {
            *slot = f64::from_bits(cell.load(Ordering::Relaxed));
        }
    }

    pub fn dot_row(&self, r: usize, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (cell, x) in self.row_cells(r).iter().zip(v) {
            acc += f64::from_bits(cell.load(Ordering::Relaxed)) * x;
        }
        acc
    }

    /// row[i] += scale * v[i]
    pub fn add_to_row(&self, r: usize, v: &[f64], scale: f64) {
        for (cell, x) in self.row_cells(r).iter().zip(v) {
            let cur = f64::from_bits(cell.load(Ordering::Relaxed));
            cell.store((cur + scale * x).to_bits(), Ordering::Relaxed);
        }
    }

    pub fn write_back(&self, m: &mut Matrix) {
        for (slot, cell) in m.data_mut().iter_mut().zip(&self.cells) {
            *slot = f64::from_bits(cell.load(Ordering::Relaxed));
        }
    }
}

/// Cell snapshot of every trainable block of a [`DseModel`].
pub(crate) struct DseParams {
    pub common: CellMatrix,
    pub specific: [CellMatrix; 2],
    pub output: CellMatrix,
    pub boundary: CellVec,
}

impl DseParams {
    pub fn from_model(model: &DseModel) -> DseParams {
        DseParams {
            common: CellMatrix::from_matrix(&model.common),
            specific: [
                CellMatrix::from_matrix(&model.specific[0]),
                CellMatrix::from_matrix(&model.specific[1]),
            ],
            output: CellMatrix::from_matrix(&model.output),
            boundary: CellVec::from_slice(&model.boundary),
        }
    }

    pub fn write_back(&self, model: &mut DseModel) {
        self.common.write_back(&mut model.common);
        self.specific[0].write_back(&mut model.specific[0]);
        self.specific[1].write_back(&mut model.specific[1]);
        model.boundary = self.boundary.to_vec();
        self.output.write_back(&mut model.output);
    }
}
