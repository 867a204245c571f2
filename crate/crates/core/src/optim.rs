//! Two-parameter Nelder–Mead minimizer.

pub(crate) struct Minimum {
    pub x: [f64; 2],
    pub fx: f64,
    pub evaluations: usize,
    pub converged: bool,
}

pub(crate) struct NelderMead {
    pub ftol: f64,
    pub xtol: f64,
    pub max_evaluations: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self { ftol: 1e-13, xtol: 1e-10, max_evaluations: 20_000 }
    }
}

impl NelderMead {
    /// Minimize `f` from `start` with initial edge lengths `step`. `f` may
    /// return `+inf` to mark infeasible points.
    pub fn minimize<F: FnMut([f64; 2]) -> f64>(&self, mut f: F, start: [f64; 2], step: [f64; 2]) -> Minimum {
        let mut evals = 0usize;
        let mut eval = |x: [f64; 2], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        let mut simplex = [start, [start[0] + step[0], start[1]], [start[0], start[1] + step[1]]];
        let mut values = [0.0; 3];
        for (v, x) in values.iter_mut().zip(&simplex) {
            *v = eval(*x, &mut evals);
        }
        let mut converged = false;
        while evals < self.max_evaluations {
            // order: best, middle, worst
            let mut idx = [0usize, 1, 2];
            idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
            simplex = [simplex[idx[0]], simplex[idx[1]], simplex[idx[2]]];
            values = [values[idx[0]], values[idx[1]], values[idx[2]]];

            let spread = (values[2] - values[0]).abs();
            let diameter = simplex[1..]
                .iter()
                .map(|p| (p[0] - simplex[0][0]).abs().max((p[1] - simplex[0][1]).abs()))
                .fold(0.0, f64::max);
            if values[0].is_finite()
                && spread <= self.ftol * (1.0 + values[0].abs())
                && diameter <= self.xtol
            {
                converged = true;
                break;
            }

            let centroid = [(simplex[0][0] + simplex[1][0]) / 2.0, (simplex[0][1] + simplex[1][1]) / 2.0];
            let along = |t: f64| {
                [
                    centroid[0] + t * (simplex[2][0] - centroid[0]),
                    centroid[1] + t * (simplex[2][1] - centroid[1]),
                ]
            };
            let xr = along(-1.0);
            let fr = eval(xr, &mut evals);
            if fr < values[0] {
                let xe = along(-2.0);
                let fe = eval(xe, &mut evals);
                if fe < fr {
                    simplex[2] = xe;
                    values[2] = fe;
                } else {
                    simplex[2] = xr;
                    values[2] = fr;
                }
            } else if fr < values[1] {
                simplex[2] = xr;
                values[2] = fr;
            } else {
                let (xc, fc) = if fr < values[2] {
                    let xc = along(-0.5);
                    (xc, eval(xc, &mut evals))
                } else {
                    let xc = along(0.5);
                    (xc, eval(xc, &mut evals))
                };
                if fc < values[2].min(fr) {
                    simplex[2] = xc;
                    values[2] = fc;
                } else {
                    // shrink toward the best vertex
                    for i in 1..3 {
                        simplex[i] = [
                            simplex[0][0] + 0.5 * (simplex[i][0] - simplex[0][0]),
                            simplex[0][1] + 0.5 * (simplex[i][1] - simplex[0][1]),
                        ];
                        values[i] = eval(simplex[i], &mut evals);
                    }
                }
            }
        }
        let best = (0..3).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap();
        Minimum { x: simplex[best], fx: values[best], evaluations: evals, converged }
    }
}
