//! Nelder–Mead simplex minimizer. Non-finite objective values are treated as
//! `+inf`, which is how parameter constraints are expressed.

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Spread of objective values across the simplex, relative to
    /// `1 + |f_best|`.
    pub f_tol: f64,
    /// Largest coordinate distance from the best vertex.
    pub x_tol: f64,
    /// Fresh simplices built around the incumbent after convergence.
    pub restarts: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { max_evals: 20_000, f_tol: 1e-12, x_tol: 1e-8, restarts: 3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

pub fn minimize<F>(mut f: F, x0: &[f64], steps: &[f64], opts: &SimplexOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x0.len(), steps.len());
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut best = run(&mut eval, x0, steps, opts, opts.max_evals);
    let mut evals = best.evals;
    for _ in 0..opts.restarts {
        if evals >= opts.max_evals {
            break;
        }
        let shrunk: Vec<f64> = steps.iter().map(|s| s * 0.1).collect();
        let next = run(&mut eval, &best.x, &shrunk, opts, opts.max_evals - evals);
        evals += next.evals;
        let improved = best.value - next.value;
        let converged = next.converged;
        if next.value <= best.value {
            best = Minimum { evals, ..next };
        }
        if converged && improved <= opts.f_tol * (1.0 + best.value.abs()) {
            best.converged = true;
            break;
        }
        best.converged = false;
    }
    best.evals = evals;
    best
}

fn run<F>(f: &mut F, x0: &[f64], steps: &[f64], opts: &SimplexOptions, budget: usize) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    const REFLECT: f64 = 1.0;
    const EXPAND: f64 = 2.0;
    const CONTRACT: f64 = 0.5;
    const SHRINK: f64 = 0.5;

    let dim = x0.len();
    let mut verts: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    verts.push(x0.to_vec());
    for (i, s) in steps.iter().enumerate() {
        let mut v = x0.to_vec();
        v[i] += s;
        verts.push(v);
    }
    let mut vals: Vec<f64> = verts.iter().map(|v| f(v)).collect();
    let mut evals = dim + 1;
    let mut converged = false;

    let point = |base: &[f64], dir: &[f64], t: f64| -> Vec<f64> {
        base.iter().zip(dir).map(|(b, d)| b + t * (d - b)).collect()
    };

    while evals < budget {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        verts = order.iter().map(|&i| verts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = vals[dim] - vals[0];
        let size = verts[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&verts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if vals[0].is_finite() && spread <= opts.f_tol * (1.0 + vals[0].abs()) && size <= opts.x_tol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; dim];
        for v in &verts[..dim] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / dim as f64;
            }
        }
        let worst = verts[dim].clone();

        let reflected = point(&centroid, &worst, -REFLECT);
        let fr = f(&reflected);
        evals += 1;
        if fr < vals[0] {
            let expanded = point(&centroid, &worst, -EXPAND);
            let fe = f(&expanded);
            evals += 1;
            if fe < fr {
                verts[dim] = expanded;
                vals[dim] = fe;
            } else {
                verts[dim] = reflected;
                vals[dim] = fr;
            }
            continue;
        }
        if fr < vals[dim - 1] {
            verts[dim] = reflected;
            vals[dim] = fr;
            continue;
        }
        let (contracted, fc) = if fr < vals[dim] {
            let c = point(&centroid, &reflected, CONTRACT);
            let v = f(&c);
            (c, v)
        } else {
            let c = point(&centroid, &worst, CONTRACT);
            let v = f(&c);
            (c, v)
        };
        evals += 1;
        if fc < vals[dim].min(fr) {
            verts[dim] = contracted;
            vals[dim] = fc;
            continue;
        }
        let best = verts[0].clone();
        for i in 1..=dim {
            verts[i] = point(&best, &verts[i], SHRINK);
            vals[i] = f(&verts[i]);
        }
        evals += dim;
    }

    let (i_best, _) = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("simplex has vertices");
    Minimum { x: verts[i_best].clone(), value: vals[i_best], evals, converged }
}
