//! Exact solver for the branch-fixed convex subproblem: project a desired
//! input onto a polygon cut from the input box by affine constraints.
//!
//! Once the controller fixes pole candidates and one branch per barrier,
//! what remains is min ||u - u_des||^2 over at most a dozen half-planes in
//! two variables. The minimizer of a strictly convex quadratic over a
//! polygon is the desired point itself, its projection onto one edge line,
//! or a vertex of two edge lines; enumerating those candidates and keeping
//! the best feasible one is the global optimum, with no iteration and no
//! convergence question.

/// Half-plane coeffs . u + constant >= 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineConstraint {
    pub coeffs: [f64; 2],
    pub constant: f64,
}

impl AffineConstraint {
    pub fn eval(&self, u: [f64; 2]) -> f64 {
        self.coeffs[0] * u[0] + self.coeffs[1] * u[1] + self.constant
    }
}

/// Geometric feasibility tolerance in input units, applied to rows scaled
/// to unit normal.
pub const FEAS_TOL: f64 = 1e-9;

fn normalized(rows: &[AffineConstraint]) -> Option<Vec<AffineConstraint>> {
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        let n = (r.coeffs[0] * r.coeffs[0] + r.coeffs[1] * r.coeffs[1]).sqrt();
        if n == 0.0 {
            // Constant row: either vacuous or it empties the polygon.
            if r.constant < 0.0 {
                return None;
            }
            continue;
        }
        out.push(AffineConstraint {
            coeffs: [r.coeffs[0] / n, r.coeffs[1] / n],
            constant: r.constant / n,
        });
    }
    Some(out)
}

fn feasible(rows: &[AffineConstraint], u: [f64; 2]) -> bool {
    u.iter().all(|v| v.is_finite()) && rows.iter().all(|r| r.eval(u) >= -FEAS_TOL)
}

/// Projects `target` onto the intersection of the box [lo, hi] with the
/// half-planes. Returns the unique minimizer of ||u - target||^2 over that
/// set, and None when the set is empty. Deterministic: among numerically
/// tied candidates the lexicographically smallest u wins.
pub fn solve_convex_subproblem(
    target: [f64; 2],
    constraints: &[AffineConstraint],
    lo: [f64; 2],
    hi: [f64; 2],
) -> Option<[f64; 2]> {
    let mut rows: Vec<AffineConstraint> = Vec::with_capacity(constraints.len() + 4);
    rows.extend_from_slice(constraints);
    rows.push(AffineConstraint {
        coeffs: [1.0, 0.0],
        constant: -lo[0],
    });
    rows.push(AffineConstraint {
        coeffs: [-1.0, 0.0],
        constant: hi[0],
    });
    rows.push(AffineConstraint {
        coeffs: [0.0, 1.0],
        constant: -lo[1],
    });
    rows.push(AffineConstraint {
        coeffs: [0.0, -1.0],
        constant: hi[1],
    });
    let rows = normalized(&rows)?;

    let mut best: Option<([f64; 2], f64)> = None;
    let mut consider = |u: [f64; 2]| {
        if !feasible(&rows, u) {
            return;
        }
        let d0 = u[0] - target[0];
        let d1 = u[1] - target[1];
        let obj = d0 * d0 + d1 * d1;
        let better = match &best {
            None => true,
            Some((bu, bobj)) => {
                obj < *bobj || (obj == *bobj && (u[0], u[1]) < (bu[0], bu[1]))
            }
        };
        if better {
            best = Some((u, obj));
        }
    };

    consider(target);
    for r in &rows {
        // Projection onto the edge line; unit normal, so the signed
        // distance is the row value itself.
        let d = r.eval(target);
        consider([target[0] - d * r.coeffs[0], target[1] - d * r.coeffs[1]]);
    }
    for (i, ri) in rows.iter().enumerate() {
        for rj in rows.iter().skip(i + 1) {
            let det = ri.coeffs[0] * rj.coeffs[1] - ri.coeffs[1] * rj.coeffs[0];
            if det.abs() < 1e-12 {
                continue;
            }
            let u = [
                (-ri.constant * rj.coeffs[1] + rj.constant * ri.coeffs[1]) / det,
                (-rj.constant * ri.coeffs[0] + ri.constant * rj.coeffs[0]) / det,
            ];
            consider(u);
        }
    }
    best.map(|(u, _)| u)
}
