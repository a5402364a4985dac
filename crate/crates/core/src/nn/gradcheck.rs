use super::params::{Gradients, ParamStore};
use crate::Scalar;

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub within_tolerance: usize,
    pub worst_relative_error: f64,
}

impl GradCheck {
    pub fn fraction_within(&self) -> f64 {
        self.within_tolerance as f64 / self.checked.max(1) as f64
    }
}

/// Compares `loss`'s analytic gradient with central differences of step
/// `h` on every parameter coordinate.
///
/// The relative error of a coordinate is `|a - n| / max(|a|, |n|)`; when
/// both magnitudes are below `abs_floor` the coordinate counts as agreeing.
pub fn check_gradients<F, L>(
    store: &ParamStore<F>,
    h: f64,
    tol: f64,
    abs_floor: f64,
    loss: L,
) -> GradCheck
where
    F: Scalar,
    L: Fn(&ParamStore<F>) -> (F, Gradients<F>),
{
    let (_, analytic) = loss(store);
    let analytic = analytic.flat();
    let mut probe = store.clone();
    let mut within = 0;
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = probe.flat_get(i);
        probe.flat_set(i, orig + F::of(h));
        let up = loss(&probe).0.f64();
        probe.flat_set(i, orig - F::of(h));
        let down = loss(&probe).0.f64();
        probe.flat_set(i, orig);
        let numeric = (up - down) / (2.0 * h);
        let a = a.f64();
        let scale = a.abs().max(numeric.abs());
        let rel = if scale < abs_floor {
            0.0
        } else {
            (a - numeric).abs() / scale
        };
        worst = worst.max(rel);
        if rel <= tol {
            within += 1;
        }
    }
    GradCheck {
        checked: analytic.len(),
        within_tolerance: within,
        worst_relative_error: worst,
    }
}
