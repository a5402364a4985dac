use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// A named row-major matrix (a vector when `cols == 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct Param<F> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<F> {
    params: Vec<Param<F>>,
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, data: Vec<F>) -> ParamId {
        assert_eq!(data.len(), rows * cols, "parameter data does not match its shape");
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.params.push(Param {
            name,
            rows,
            cols,
            data,
        });
        ParamId(self.params.len() - 1)
    }

    /// Uniform in `[-scale, scale]`.
    pub fn add_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        scale: f64,
        rng: &mut R,
    ) -> ParamId {
        let data = (0..rows * cols)
            .map(|_| F::of(rng.gen_range(-scale..=scale)))
            .collect();
        self.add(name, rows, cols, data)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.add(name, rows, cols, vec![F::zero(); rows * cols])
    }

    pub fn get(&self, id: ParamId) -> &Param<F> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<F> {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<F>> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn zero_grads(&self) -> Gradients<F> {
        Gradients {
            data: self.params.iter().map(|p| vec![F::zero(); p.data.len()]).collect(),
        }
    }

    fn locate(&self, mut flat: usize) -> (usize, usize) {
        for (i, p) in self.params.iter().enumerate() {
            if flat < p.data.len() {
                return (i, flat);
            }
            flat -= p.data.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn flat_get(&self, flat: usize) -> F {
        let (p, o) = self.locate(flat);
        self.params[p].data[o]
    }

    pub fn flat_set(&mut self, flat: usize, value: F) {
        let (p, o) = self.locate(flat);
        self.params[p].data[o] = value;
    }

    /// Same names and shapes, in the same order.
    pub fn same_layout(&self, other: &ParamStore<F>) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.rows == b.rows && a.cols == b.cols)
    }

    pub fn to_records(&self) -> Vec<ParamRecord> {
        self.params
            .iter()
            .map(|p| ParamRecord {
                name: p.name.clone(),
                rows: p.rows,
                cols: p.cols,
                data: p.data.iter().map(|x| x.f64()).collect(),
            })
            .collect()
    }

    /// Overwrites values from records; names and shapes must match exactly.
    pub fn load_records(&mut self, records: &[ParamRecord]) -> Result<(), String> {
        if records.len() != self.params.len() {
            return Err(format!(
                "expected {} parameter arrays, found {}",
                self.params.len(),
                records.len()
            ));
        }
        for (p, r) in self.params.iter_mut().zip(records) {
            if p.name != r.name || p.rows != r.rows || p.cols != r.cols || r.data.len() != p.data.len() {
                return Err(format!(
                    "parameter {} ({}x{}) does not match stored {} ({}x{})",
                    p.name, p.rows, p.cols, r.name, r.rows, r.cols
                ));
            }
            for (d, &s) in p.data.iter_mut().zip(&r.data) {
                *d = F::of(s);
            }
        }
        Ok(())
    }
}

/// Serialized form of one parameter array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Gradient buffers laid out like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub(crate) data: Vec<Vec<F>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, id: ParamId) -> &[F] {
        &self.data[id.0]
    }

    pub(crate) fn slot(&mut self, id: ParamId) -> &mut [F] {
        &mut self.data[id.0]
    }

    pub fn flat(&self) -> Vec<F> {
        self.data.iter().flatten().copied().collect()
    }

    pub fn scale(&mut self, k: F) {
        for v in self.data.iter_mut().flatten() {
            *v *= k;
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients<F>, k: F) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += k * y;
            }
        }
    }

    pub fn global_norm(&self) -> F {
        self.data
            .iter()
            .flatten()
            .map(|&x| x * x)
            .sum::<F>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|x| x.is_finite())
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: F) -> F {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
        norm
    }
}
