//! Restarted GMRES over any inner-product space.

pub(crate) trait KrylovVector: Clone {
    fn dot(&self, other: &Self) -> f64;
    fn axpy(&mut self, a: f64, x: &Self);
    fn scale(&mut self, a: f64);
    fn zeros_like(&self) -> Self;

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

pub(crate) struct GmresOutcome<V> {
    pub x: V,
    pub iterations: usize,
    #[cfg_attr(not(test), allow(dead_code))]
    pub relative_residual: f64,
}

/// Solves `op(x) = b` to `||b - op(x)|| <= rtol ||b||`, starting from zero.
pub(crate) fn gmres<V, F>(mut op: F, b: &V, rtol: f64, restart: usize, max_iter: usize) -> GmresOutcome<V>
where
    V: KrylovVector,
    F: FnMut(&V) -> V,
{
    let b_norm = b.norm();
    let mut x = b.zeros_like();
    if b_norm == 0.0 {
        return GmresOutcome {
            x,
            iterations: 0,
            relative_residual: 0.0,
        };
    }
    let target = rtol * b_norm;
    let mut iterations = 0;
    let mut residual = b_norm;
    let mut first = true;

    while iterations < max_iter {
        let mut r = b.clone();
        if !first {
            let ax = op(&x);
            r.axpy(-1.0, &ax);
        }
        first = false;
        let beta = r.norm();
        residual = beta;
        if beta <= target {
            break;
        }
        r.scale(1.0 / beta);
        let mut basis = vec![r];
        // Hessenberg columns, already rotated into upper-triangular form.
        let mut h: Vec<Vec<f64>> = Vec::new();
        let mut rotations: Vec<(f64, f64)> = Vec::new();
        let mut g = vec![beta];

        for k in 0..restart {
            if iterations >= max_iter {
                break;
            }
            iterations += 1;
            let mut w = op(&basis[k]);
            let mut col = Vec::with_capacity(k + 2);
            for v in &basis {
                let hik = w.dot(v);
                w.axpy(-hik, v);
                col.push(hik);
            }
            let h_next = w.norm();
            col.push(h_next);
            for (i, &(c, s)) in rotations.iter().enumerate() {
                let (a, bb) = (col[i], col[i + 1]);
                col[i] = c * a + s * bb;
                col[i + 1] = -s * a + c * bb;
            }
            let (a, bb) = (col[k], col[k + 1]);
            let denom = a.hypot(bb);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (a / denom, bb / denom) };
            col[k] = c * a + s * bb;
            col[k + 1] = 0.0;
            rotations.push((c, s));
            let gk = g[k];
            g[k] = c * gk;
            g.push(-s * gk);
            h.push(col);
            residual = g[k + 1].abs();
            if residual <= target || h_next == 0.0 {
                break;
            }
            w.scale(1.0 / h_next);
            basis.push(w);
        }

        // Back substitution on the rotated Hessenberg system.
        let m = h.len();
        let mut y = vec![0.0; m];
        for i in (0..m).rev() {
            let mut acc = g[i];
            for j in i + 1..m {
                acc -= h[j][i] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        for (yi, v) in y.iter().zip(&basis) {
            x.axpy(*yi, v);
        }
        if residual <= target {
            break;
        }
    }

    GmresOutcome {
        x,
        iterations,
        relative_residual: residual / b_norm,
    }
}
