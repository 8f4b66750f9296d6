//! Oracles written independently of the library: closed-form Legendre
//! polynomials, a scalar reduction of the mean-field steady states, an RK4
//! integrator and a dense linear solver.

#![allow(dead_code)]

pub const ALPHA: f64 = 1.6;
pub const GAMMA: f64 = 0.04;
pub const K_R: f64 = 4.0;

/// Explicit Legendre polynomials up to degree 6.
pub fn legendre_closed(i: usize, x: f64) -> f64 {
    let x2 = x * x;
    match i {
        0 => 1.0,
        1 => x,
        2 => (3.0 * x2 - 1.0) / 2.0,
        3 => (5.0 * x2 - 3.0) * x / 2.0,
        4 => ((35.0 * x2 - 30.0) * x2 + 3.0) / 8.0,
        5 => ((63.0 * x2 - 70.0) * x2 + 15.0) * x / 8.0,
        6 => (((231.0 * x2 - 315.0) * x2 + 105.0) * x2 - 5.0) / 16.0,
        _ => panic!("degree {i} not tabulated"),
    }
}

pub fn rhs(theta: [f64; 3], beta: f64) -> [f64; 3] {
    let [a, b, _] = theta;
    let v = 1.0 - a - b;
    let da = ALPHA * v - GAMMA * a - K_R * a * b;
    let db = beta * v * v - K_R * a * b;
    [da, db, -da - db]
}

pub fn rk4(theta: [f64; 3], beta: f64, duration: f64, steps: usize) -> [f64; 3] {
    let h = duration / steps as f64;
    let mut y = theta;
    let add = |y: [f64; 3], k: [f64; 3], s: f64| [y[0] + s * k[0], y[1] + s * k[1], y[2] + s * k[2]];
    for _ in 0..steps {
        let k1 = rhs(y, beta);
        let k2 = rhs(add(y, k1, h / 2.0), beta);
        let k3 = rhs(add(y, k2, h / 2.0), beta);
        let k4 = rhs(add(y, k3, h), beta);
        for s in 0..3 {
            y[s] += h / 6.0 * (k1[s] + 2.0 * k2[s] + 2.0 * k3[s] + k4[s]);
        }
    }
    y
}

#[derive(Debug, Clone, Copy)]
pub struct Root {
    pub theta: [f64; 3],
    pub stable: bool,
}

/// Interior steady states. Eliminating A and B through the two balance
/// equations leaves g(v) = A(v) + B(v) + v − 1 on 0 < v < α/β, with
/// A = (αv − βv²)/γ and B = βv²/(k_r A).
pub fn steady_roots(beta: f64) -> Vec<Root> {
    let vmax = ALPHA / beta;
    let g = |v: f64| {
        let a = (ALPHA * v - beta * v * v) / GAMMA;
        let b = beta * v * v / (K_R * a);
        a + b + v - 1.0
    };
    let n = 200_000;
    let grid = |k: usize| vmax * k as f64 / n as f64;
    let mut roots = Vec::new();
    for k in 1..n - 1 {
        let (lo, hi) = (grid(k), grid(k + 1));
        let (glo, ghi) = (g(lo), g(hi));
        if glo == 0.0 || glo.signum() != ghi.signum() {
            let (mut l, mut h) = (lo, hi);
            for _ in 0..200 {
                let m = 0.5 * (l + h);
                if g(m).signum() == glo.signum() {
                    l = m;
                } else {
                    h = m;
                }
            }
            let v = 0.5 * (l + h);
            let a = (ALPHA * v - beta * v * v) / GAMMA;
            let b = beta * v * v / (K_R * a);
            let theta = [a, b, v];
            roots.push(Root {
                theta,
                stable: is_stable(theta, beta),
            });
        }
    }
    roots.sort_by(|x, y| x.theta[0].partial_cmp(&y.theta[0]).unwrap());
    roots
}

/// Both eigenvalues of the reduced 2×2 Jacobian (central differences) in
/// the open left half plane.
pub fn is_stable(theta: [f64; 3], beta: f64) -> bool {
    let h = 1e-7;
    let f = |a: f64, b: f64| {
        let r = rhs([a, b, 1.0 - a - b], beta);
        [r[0], r[1]]
    };
    let [a, b, _] = theta;
    let da = [(f(a + h, b)[0] - f(a - h, b)[0]) / (2.0 * h), (f(a + h, b)[1] - f(a - h, b)[1]) / (2.0 * h)];
    let db = [(f(a, b + h)[0] - f(a, b - h)[0]) / (2.0 * h), (f(a, b + h)[1] - f(a, b - h)[1]) / (2.0 * h)];
    let tr = da[0] + db[1];
    let det = da[0] * db[1] - db[0] * da[1];
    tr < 0.0 && det > 0.0
}

/// Values of β in [lo, hi] where the number of interior roots changes.
pub fn folds(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = |b: f64| steady_roots(b).len();
    let mut out = Vec::new();
    let mut b = lo;
    let mut c = count(b);
    while b < hi {
        let nb = (b + step).min(hi);
        let nc = count(nb);
        if nc != c {
            let (mut l, mut h) = (b, nb);
            while h - l > 1e-7 * h {
                let m = 0.5 * (l + h);
                if count(m) == c {
                    l = m;
                } else {
                    h = m;
                }
            }
            out.push(0.5 * (l + h));
        }
        b = nb;
        c = nc;
    }
    out
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Inverse of a dense square matrix, column by column.
pub fn inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            solve(a.to_vec(), e)
        })
        .collect();
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}
