//! Central finite-difference verification of analytic gradients (f64 only).

use super::{Graph, Tensor, TensorError, Var};

/// Gradient magnitudes below this are compared absolutely instead of relatively.
pub const ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub max_rel_err: f64,
    /// `(input index, element index)` of the worst element.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    /// Coordinates whose stencil `x ± h` crosses an lrelu or abs kink; not compared.
    pub straddled: usize,
}

impl FdReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Per-element error: relative with denominator `max(|a|, |n|)`, absolute once
/// both magnitudes fall under [`ABS_FLOOR`].
pub fn element_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    let diff = (analytic - numeric).abs();
    if scale < ABS_FLOOR {
        diff
    } else {
        diff / scale
    }
}

/// Checks `f` at `x`.
pub fn finite_diff_check<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<FdReport, TensorError>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var, TensorError>,
{
    finite_diff_check_many(|g, v| f(g, v[0]), std::slice::from_ref(x), h, None)
}

/// Central difference stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stencil {
    /// `(f(x+h) − f(x−h)) / 2h`, truncation `O(h²)`.
    #[default]
    ThreePoint,
    /// `(−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h`, truncation `O(h⁴)`.
    FivePoint,
}

impl Stencil {
    fn taps(self) -> &'static [(f64, f64)] {
        match self {
            Stencil::ThreePoint => &[(1.0, 0.5), (-1.0, -0.5)],
            Stencil::FivePoint => &[(2.0, -1.0 / 12.0), (1.0, 8.0 / 12.0), (-1.0, -8.0 / 12.0), (-2.0, 1.0 / 12.0)],
        }
    }
}

/// Checks `f` with respect to every input, or only the listed
/// `(input, element)` coordinates when `sample` is given.
pub fn finite_diff_check_many<F>(
    f: F,
    inputs: &[Tensor<f64>],
    h: f64,
    sample: Option<&[(usize, usize)]>,
) -> Result<FdReport, TensorError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError>,
{
    finite_diff_check_with(f, inputs, h, sample, Stencil::ThreePoint)
}

/// [`finite_diff_check_many`] with a chosen stencil. A coordinate is skipped
/// when any two stencil points take different lrelu/abs branches.
pub fn finite_diff_check_with<F>(
    f: F,
    inputs: &[Tensor<f64>],
    h: f64,
    sample: Option<&[(usize, usize)]>,
    stencil: Stencil,
) -> Result<FdReport, TensorError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |tensors: &[Tensor<f64>]| -> Result<(f64, Vec<bool>), TensorError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = tensors.iter().map(|t| g.leaf(t)).collect();
        let y = f(&mut g, &vars)?;
        Ok((g.value(y)[0], g.branch_pattern()))
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.set_requires_grad(true);
            g.leaf(&t)
        })
        .collect();
    let y = f(&mut g, &vars)?;
    g.backward(y)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            g.grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect();

    let coords: Vec<(usize, usize)> = match sample {
        Some(s) => s.to_vec(),
        None => inputs
            .iter()
            .enumerate()
            .flat_map(|(i, t)| (0..t.numel()).map(move |e| (i, e)))
            .collect(),
    };

    let mut report = FdReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        straddled: 0,
    };
    let mut work = inputs.to_vec();
    for (i, e) in coords {
        let orig = work[i].data()[e];
        let (mut numeric, mut branches, mut straddles) = (0.0, None, false);
        for &(offset, weight) in stencil.taps() {
            work[i].data_mut()[e] = orig + offset * h;
            let (v, b) = eval(&work)?;
            numeric += weight * v;
            straddles |= branches.as_ref().is_some_and(|first| *first != b);
            branches.get_or_insert(b);
        }
        work[i].data_mut()[e] = orig;
        if straddles {
            report.straddled += 1;
            continue;
        }
        numeric /= h;
        let a = analytic[i][e];
        let err = element_error(a, numeric);
        report.checked += 1;
        if err > report.max_rel_err || report.checked == 1 {
            report = FdReport {
                max_rel_err: err,
                worst: (i, e),
                analytic: a,
                numeric,
                ..report
            };
        }
    }
    Ok(report)
}
