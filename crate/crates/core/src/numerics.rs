//! Fixed-step integration, central-difference Jacobians and a small dense
//! eigensolver.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest square matrix accepted by [`eigenvalues`].
pub const MAX_EIG_SIZE: usize = 8;

/// Default central-difference step for unit-scaled states.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Dense row-major real matrix.
#[derive(Clone, PartialEq)]
pub struct SmallMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for SmallMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SmallMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                write!(f, "{:>12.6} ", self[(r, c)])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl SmallMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Builds a matrix from rows. Panics if the rows are ragged.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let nr = rows.len();
        let nc = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(nr * nc);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), nc, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: nr,
            cols: nc,
            data,
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "matrix-vector dimension mismatch");
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entrywise absolute difference. Panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `(self + self^T) / 2`.
    pub fn symmetrized(&self) -> Self {
        let t = self.transpose();
        (self + &t).scale(0.5)
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        let mut b = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                b[(r, c)] = self[(r0 + r, c0 + c)];
            }
        }
        b
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Self) {
        for r in 0..b.rows {
            for c in 0..b.cols {
                self[(r0 + r, c0 + c)] = b[(r, c)];
            }
        }
    }

    /// Gauss-Jordan inverse with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        let scale = self.max_abs();
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::Singular);
        }
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
                .unwrap();
            if a[(pivot, col)].abs() <= f64::EPSILON * scale {
                return Err(Error::Singular);
            }
            if pivot != col {
                for c in 0..n {
                    a.data.swap(pivot * n + c, col * n + c);
                    inv.data.swap(pivot * n + c, col * n + c);
                }
            }
            let p = a[(col, col)];
            for c in 0..n {
                a[(col, c)] /= p;
                inv[(col, c)] /= p;
            }
            for r in 0..n {
                if r != col {
                    let f = a[(r, col)];
                    if f != 0.0 {
                        for c in 0..n {
                            a[(r, c)] -= f * a[(col, c)];
                            inv[(r, c)] -= f * inv[(col, c)];
                        }
                    }
                }
            }
        }
        Ok(inv)
    }
}

impl Index<(usize, usize)> for SmallMatrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for SmallMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl<'a> Mul<&'a SmallMatrix> for &'a SmallMatrix {
    type Output = SmallMatrix;
    fn mul(self, rhs: &SmallMatrix) -> SmallMatrix {
        assert_eq!(self.cols, rhs.rows, "matrix product dimension mismatch");
        let mut out = SmallMatrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == 0.0 {
                    continue;
                }
                for c in 0..rhs.cols {
                    out[(r, c)] += a * rhs[(k, c)];
                }
            }
        }
        out
    }
}

impl<'a> Add<&'a SmallMatrix> for &'a SmallMatrix {
    type Output = SmallMatrix;
    fn add(self, rhs: &SmallMatrix) -> SmallMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        SmallMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl<'a> Sub<&'a SmallMatrix> for &'a SmallMatrix {
    type Output = SmallMatrix;
    fn sub(self, rhs: &SmallMatrix) -> SmallMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        SmallMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// Multiset of complex eigenvalues, sorted by (re, im).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum(Vec<Complex64>);

impl Spectrum {
    pub fn new(mut values: Vec<Complex64>) -> Self {
        values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        Self(values)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Multiset union.
    pub fn union(&self, other: &Spectrum) -> Spectrum {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Spectrum::new(v)
    }

    pub fn abscissa(&self) -> f64 {
        self.0
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest distance between paired eigenvalues, pairing greedily by
    /// closest remaining pair. `None` when the multisets differ in size.
    pub fn max_mismatch(&self, other: &Spectrum) -> Option<f64> {
        if self.len() != other.len() {
            return None;
        }
        let mut left: Vec<Complex64> = self.0.clone();
        let mut right: Vec<Complex64> = other.0.clone();
        let mut worst = 0.0f64;
        while !left.is_empty() {
            let mut best = (0, 0, f64::INFINITY);
            for (i, a) in left.iter().enumerate() {
                for (j, b) in right.iter().enumerate() {
                    let d = (a - b).norm();
                    if d < best.2 {
                        best = (i, j, d);
                    }
                }
            }
            worst = worst.max(best.2);
            left.swap_remove(best.0);
            right.swap_remove(best.1);
        }
        Some(worst)
    }

    /// Pairs of `[re, im]`, convenient for serialization.
    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.0.iter().map(|z| [z.re, z.im]).collect()
    }
}

/// Samples of an integrated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> (f64, &[f64]) {
        let n = self.times.len() - 1;
        (self.times[n], &self.states[n])
    }
}

/// One classical RK4 step.
pub fn rk4_step<F>(field: &F, t: f64, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    try_rk4_step(&|t, x: &[f64]| Ok(field(t, x)), t, x, h).expect("infallible field")
}

/// RK4 step for a field that may fail; the first stage error is returned.
pub fn try_rk4_step<F>(field: &F, t: f64, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let n = x.len();
    let k1 = field(t, x)?;
    let tmp: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * k1[i]).collect();
    let k2 = field(t + 0.5 * h, &tmp)?;
    let tmp: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * k2[i]).collect();
    let k3 = field(t + 0.5 * h, &tmp)?;
    let tmp: Vec<f64> = (0..n).map(|i| x[i] + h * k3[i]).collect();
    let k4 = field(t + h, &tmp)?;
    Ok((0..n)
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Grid `t0, t0 + dt, ...` ending exactly on `t1`; the last interval may be shorter.
pub fn time_grid(t0: f64, t1: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need t1 > t0, got [{t0}, {t1}]"
        )));
    }
    let mut grid = vec![t0];
    let mut k = 1u64;
    loop {
        let t = t0 + k as f64 * dt;
        // Absorb a sliver-sized final step into the previous one.
        if t >= t1 - 1e-9 * dt {
            grid.push(t1);
            break;
        }
        grid.push(t);
        k += 1;
    }
    Ok(grid)
}

/// Fixed-step RK4 from `t0` to `t1`.
pub fn integrate_rk4<F>(field: F, x0: &[f64], t0: f64, t1: f64, dt: f64) -> Result<Trajectory>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let grid = time_grid(t0, t1, dt)?;
    let mut states = Vec::with_capacity(grid.len());
    states.push(x0.to_vec());
    for w in grid.windows(2) {
        let next = rk4_step(&field, w[0], states.last().unwrap(), w[1] - w[0]);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t: w[0] });
        }
        states.push(next);
    }
    Ok(Trajectory {
        times: grid,
        states,
    })
}

/// Central-difference Jacobian of a fallible map.
pub fn try_jacobian_fd<F>(map: F, point: &[f64], step: f64) -> Result<SmallMatrix>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be > 0, got {step}"
        )));
    }
    let n = point.len();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut x = point.to_vec();
    for j in 0..n {
        x[j] = point[j] + step;
        let fp = map(&x)?;
        x[j] = point[j] - step;
        let fm = map(&x)?;
        x[j] = point[j];
        if fp.len() != fm.len() {
            return Err(Error::Dimension("map output length changed".into()));
        }
        let col: Vec<f64> = fp
            .iter()
            .zip(&fm)
            .map(|(a, b)| (a - b) / (2.0 * step))
            .collect();
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteJacobian { column: j });
        }
        cols.push(col);
    }
    let m = cols.first().map_or(0, Vec::len);
    let mut jac = SmallMatrix::zeros(m, n);
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            jac[(i, j)] = *v;
        }
    }
    Ok(jac)
}

/// Central-difference Jacobian; column `j` is `(f(p + h e_j) - f(p - h e_j)) / 2h`.
pub fn jacobian_fd<F>(map: F, point: &[f64], step: f64) -> Result<SmallMatrix>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    try_jacobian_fd(|x| Ok(map(x)), point, step)
}

/// All eigenvalues of a real square matrix (size <= 8), with multiplicity.
///
/// Balancing, reduction to upper Hessenberg form by stabilized elementary
/// similarity transforms, then Francis double-shift QR.
pub fn eigenvalues(m: &SmallMatrix) -> Result<Spectrum> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let n = m.rows();
    if n > MAX_EIG_SIZE {
        return Err(Error::TooLarge {
            size: n,
            max: MAX_EIG_SIZE,
        });
    }
    if !m.is_finite() {
        return Err(Error::InvalidArgument(
            "matrix has non-finite entries".into(),
        ));
    }
    if n == 0 {
        return Ok(Spectrum::new(Vec::new()));
    }
    let mut a: Vec<Vec<f64>> = (0..n).map(|r| m.row(r).to_vec()).collect();
    balance(&mut a);
    to_hessenberg(&mut a);
    hessenberg_qr(&mut a).map(Spectrum::new)
}

/// Maximum real part over the spectrum.
pub fn spectral_abscissa(m: &SmallMatrix) -> Result<f64> {
    Ok(eigenvalues(m)?.abscissa())
}

fn balance(a: &mut [Vec<f64>]) {
    const RADIX: f64 = 2.0;
    let n = a.len();
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 0..n {
                        a[i][j] *= g;
                    }
                    for row in a.iter_mut() {
                        row[i] *= f;
                    }
                }
            }
        }
    }
}

fn to_hessenberg(a: &mut [Vec<f64>]) {
    let n = a.len();
    for m in 1..n.saturating_sub(1) {
        let mut x = 0.0f64;
        let mut i = m;
        for j in m..n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                i = j;
            }
        }
        if i != m {
            for j in (m - 1)..n {
                let tmp = a[i][j];
                a[i][j] = a[m][j];
                a[m][j] = tmp;
            }
            for row in a.iter_mut() {
                row.swap(i, m);
            }
        }
        if x != 0.0 {
            for i in (m + 1)..n {
                let mut y = a[i][m - 1];
                if y != 0.0 {
                    y /= x;
                    a[i][m - 1] = y;
                    for j in m..n {
                        a[i][j] -= y * a[m][j];
                    }
                    for row in a.iter_mut() {
                        row[m] += y * row[i];
                    }
                }
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        for v in row.iter_mut().take(i.saturating_sub(1)) {
            *v = 0.0;
        }
    }
}

fn hessenberg_qr(a: &mut [Vec<f64>]) -> Result<Vec<Complex64>> {
    let n = a.len() as isize;
    let mut out = vec![Complex64::new(0.0, 0.0); n as usize];
    let at = |i: isize| i as usize;
    let mut anorm = 0.0;
    for i in 0..n {
        for j in (i - 1).max(0)..n {
            anorm += a[at(i)][at(j)].abs();
        }
    }
    let eps = f64::EPSILON;
    let mut nn = n - 1;
    let mut t = 0.0;
    let (mut p, mut q, mut r) = (0.0f64, 0.0f64, 0.0f64);
    while nn >= 0 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 1 {
                let mut s = a[at(l - 1)][at(l - 1)].abs() + a[at(l)][at(l)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[at(l)][at(l - 1)].abs() <= eps * s {
                    a[at(l)][at(l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[at(nn)][at(nn)];
            if l == nn {
                out[at(nn)] = Complex64::new(x + t, 0.0);
                nn -= 1;
                break;
            }
            let mut y = a[at(nn - 1)][at(nn - 1)];
            let mut w = a[at(nn)][at(nn - 1)] * a[at(nn - 1)][at(nn)];
            if l == nn - 1 {
                p = 0.5 * (y - x);
                q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + z.copysign(p);
                    out[at(nn - 1)] = Complex64::new(x + z, 0.0);
                    out[at(nn)] = Complex64::new(x + z, 0.0);
                    if z != 0.0 {
                        out[at(nn)] = Complex64::new(x - w / z, 0.0);
                    }
                } else {
                    out[at(nn - 1)] = Complex64::new(x + p, z);
                    out[at(nn)] = Complex64::new(x + p, -z);
                }
                nn -= 2;
                break;
            }
            if its == 60 {
                return Err(Error::NoConvergence);
            }
            if its == 10 || its == 20 {
                // Exceptional shift.
                t += x;
                for i in 0..=nn {
                    a[at(i)][at(i)] -= x;
                }
                let s = a[at(nn)][at(nn - 1)].abs() + a[at(nn - 1)][at(nn - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            let mut m = nn - 2;
            let mut z;
            while m >= l {
                z = a[at(m)][at(m)];
                r = x - z;
                let s = y - z;
                p = (r * s - w) / a[at(m + 1)][at(m)] + a[at(m)][at(m + 1)];
                q = a[at(m + 1)][at(m + 1)] - z - r - s;
                r = a[at(m + 2)][at(m + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[at(m)][at(m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs()
                    * (a[at(m - 1)][at(m - 1)].abs() + z.abs() + a[at(m + 1)][at(m + 1)].abs());
                if u <= eps * v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nn {
                a[at(i)][at(i - 2)] = 0.0;
                if i != m + 2 {
                    a[at(i)][at(i - 3)] = 0.0;
                }
            }
            let mut k = m;
            while k < nn {
                if k != m {
                    p = a[at(k)][at(k - 1)];
                    q = a[at(k + 1)][at(k - 1)];
                    r = 0.0;
                    if k + 1 != nn {
                        r = a[at(k + 2)][at(k - 1)];
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[at(k)][at(k - 1)] = -a[at(k)][at(k - 1)];
                        }
                    } else {
                        a[at(k)][at(k - 1)] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nn {
                        let mut pp = a[at(k)][at(j)] + q * a[at(k + 1)][at(j)];
                        if k + 1 != nn {
                            pp += r * a[at(k + 2)][at(j)];
                            a[at(k + 2)][at(j)] -= pp * z;
                        }
                        a[at(k + 1)][at(j)] -= pp * y;
                        a[at(k)][at(j)] -= pp * x;
                    }
                    let mmin = if nn < k + 3 { nn } else { k + 3 };
                    for i in l..=mmin {
                        let mut pp = x * a[at(i)][at(k)] + y * a[at(i)][at(k + 1)];
                        if k + 1 != nn {
                            pp += z * a[at(i)][at(k + 2)];
                            a[at(i)][at(k + 2)] -= pp * r;
                        }
                        a[at(i)][at(k + 1)] -= pp * q;
                        a[at(i)][at(k)] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(out)
}
