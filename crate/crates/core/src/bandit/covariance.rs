use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::{self, BinReader, BinWriter};
use crate::reward::GradientVector;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovMode {
    /// Dense `G x G` matrix with a Sherman-Morrison maintained inverse.
    #[default]
    Full,
    /// Diagonal approximation: only `V_ii` accumulate.
    Diagonal,
}

/// Gradient-outer-product design matrix `V` and its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceState<S> {
    dim: usize,
    mode: CovMode,
    lambda0: S,
    /// Row-major `dim x dim` in full mode, the diagonal in diagonal mode.
    v: Vec<S>,
    vinv: Vec<S>,
}

impl<S: Scalar> CovarianceState<S> {
    /// `V_0 = lambda0 * I`.
    pub fn new(dim: usize, lambda0: S, mode: CovMode) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("covariance dimension must be >= 1".into()));
        }
        if !(lambda0 > S::zero()) || !lambda0.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda0 must be positive, got {lambda0}")));
        }
        let (v, vinv) = match mode {
            CovMode::Full => {
                let mut v = vec![S::zero(); dim * dim];
                let mut vinv = vec![S::zero(); dim * dim];
                for i in 0..dim {
                    v[i * dim + i] = lambda0;
                    vinv[i * dim + i] = S::one() / lambda0;
                }
                (v, vinv)
            }
            CovMode::Diagonal => (vec![lambda0; dim], vec![S::one() / lambda0; dim]),
        };
        Ok(CovarianceState { dim, mode, lambda0, v, vinv })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> CovMode {
        self.mode
    }

    pub fn lambda0(&self) -> S {
        self.lambda0
    }

    /// Entry `(i, j)` of `V`.
    pub fn v(&self, i: usize, j: usize) -> S {
        self.entry(&self.v, i, j)
    }

    /// Entry `(i, j)` of the maintained inverse.
    pub fn vinv(&self, i: usize, j: usize) -> S {
        self.entry(&self.vinv, i, j)
    }

    fn entry(&self, m: &[S], i: usize, j: usize) -> S {
        match self.mode {
            CovMode::Full => m[i * self.dim + j],
            CovMode::Diagonal if i == j => m[i],
            CovMode::Diagonal => S::zero(),
        }
    }

    /// Dense row-major copies of `(V, V^-1)`.
    pub fn dense(&self) -> (Vec<S>, Vec<S>) {
        let n = self.dim;
        let mut v = vec![S::zero(); n * n];
        let mut vinv = vec![S::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                v[i * n + j] = self.v(i, j);
                vinv[i * n + j] = self.vinv(i, j);
            }
        }
        (v, vinv)
    }

    fn check_len(&self, g: &[S]) -> Result<()> {
        if g.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "vector of length {} against covariance of dimension {}",
                g.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// `d^T V^-1 d`.
    pub fn inv_quad(&self, d: &[S]) -> Result<S> {
        self.check_len(d)?;
        Ok(match self.mode {
            CovMode::Full => {
                let n = self.dim;
                let mut total = S::zero();
                for i in 0..n {
                    let row = &self.vinv[i * n..(i + 1) * n];
                    let ri: S = row.iter().zip(d).map(|(&a, &b)| a * b).sum();
                    total += d[i] * ri;
                }
                total
            }
            CovMode::Diagonal => self.vinv.iter().zip(d).map(|(&w, &x)| w * x * x).sum(),
        })
    }

    /// `V += g g^T` with the rank-one inverse update
    /// `V^-1 -= (V^-1 g)(g^T V^-1) / (1 + g^T V^-1 g)`.
    pub fn update(&mut self, g: &[S]) -> Result<()> {
        self.check_len(g)?;
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalState("non-finite gradient difference".into()));
        }
        match self.mode {
            CovMode::Full => {
                let n = self.dim;
                let u: Vec<S> =
                    (0..n).map(|i| self.vinv[i * n..(i + 1) * n].iter().zip(g).map(|(&a, &b)| a * b).sum()).collect();
                let denom = S::one() + g.iter().zip(&u).map(|(&a, &b)| a * b).sum::<S>();
                if !(denom > S::zero()) || !denom.is_finite() {
                    return Err(Error::NumericalState(format!("rank-one denominator {denom} is not positive")));
                }
                for i in 0..n {
                    for j in i..n {
                        let dv = g[i] * g[j];
                        let dinv = u[i] * u[j] / denom;
                        self.v[i * n + j] += dv;
                        self.vinv[i * n + j] -= dinv;
                        if i != j {
                            self.v[j * n + i] += dv;
                            self.vinv[j * n + i] -= dinv;
                        }
                    }
                }
            }
            CovMode::Diagonal => {
                for ((v, w), &x) in self.v.iter_mut().zip(self.vinv.iter_mut()).zip(g) {
                    *v += x * x;
                    *w = S::one() / *v;
                }
            }
        }
        Ok(())
    }

    /// `|V V^-1 - I|_F / |I|_F`.
    pub fn inverse_residual(&self) -> S {
        let n = self.dim;
        let mut acc = S::zero();
        for i in 0..n {
            for j in 0..n {
                let mut s = S::zero();
                for k in 0..n {
                    s += self.v(i, k) * self.vinv(k, j);
                }
                let target = if i == j { S::one() } else { S::zero() };
                acc += (s - target) * (s - target);
            }
        }
        (acc / S::lit(n as f64)).sqrt()
    }

    pub fn max_asymmetry(&self) -> S {
        let n = self.dim;
        let mut worst = S::zero();
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((self.v(i, j) - self.v(j, i)).abs());
                worst = worst.max((self.vinv(i, j) - self.vinv(j, i)).abs());
            }
        }
        worst
    }

    /// Writes `DSCV`, version, `{G, mode, lambda0}`, then row-major `V` and
    /// `V^-1` as little-endian `f64`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BinWriter::new(std::io::BufWriter::new(io::create(path)?), path);
        self.write_to(&mut w)?;
        w.finish().map(|_| ())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = BinReader::new(std::io::BufReader::new(io::open(path)?), path);
        let c = Self::read_from(&mut r)?;
        r.expect_eof()?;
        Ok(c)
    }

    pub(crate) fn write_to<W: std::io::Write>(&self, w: &mut BinWriter<W>) -> Result<()> {
        w.magic(COV_MAGIC)?;
        w.u32(COV_VERSION)?;
        w.u32(self.dim as u32)?;
        w.u8(match self.mode {
            CovMode::Full => 0,
            CovMode::Diagonal => 1,
        })?;
        w.f64(self.lambda0.to_f64_lossy())?;
        let (v, vinv) = self.dense();
        w.f64s(v.iter().map(|x| x.to_f64_lossy()))?;
        w.f64s(vinv.iter().map(|x| x.to_f64_lossy()))
    }

    pub(crate) fn read_from<R: std::io::Read>(r: &mut BinReader<R>) -> Result<Self> {
        r.expect_magic(COV_MAGIC, "covariance snapshot")?;
        r.expect_version(COV_VERSION)?;
        let dim = r.u32()? as usize;
        let mode = match r.u8()? {
            0 => CovMode::Full,
            1 => CovMode::Diagonal,
            m => return Err(r.format_err(format!("unknown covariance mode {m}"))),
        };
        let lambda0 = S::lit(r.f64()?);
        let to_s = |v: Vec<f64>| v.into_iter().map(S::lit).collect::<Vec<_>>();
        let v = to_s(r.f64s(dim * dim)?);
        let vinv = to_s(r.f64s(dim * dim)?);
        let (v, vinv) = match mode {
            CovMode::Full => (v, vinv),
            CovMode::Diagonal => {
                ((0..dim).map(|i| v[i * dim + i]).collect(), (0..dim).map(|i| vinv[i * dim + i]).collect())
            }
        };
        Ok(CovarianceState { dim, mode, lambda0, v, vinv })
    }
}

const COV_MAGIC: &[u8; 4] = b"DSCV";
const COV_VERSION: u32 = 1;

/// Returns the updated state, leaving `cov` untouched.
pub fn cov_update<S: Scalar>(cov: &CovarianceState<S>, g_diff: &GradientVector<S>) -> Result<CovarianceState<S>> {
    let mut next = cov.clone();
    next.update(g_diff.as_slice())?;
    Ok(next)
}

/// `|g_cand - g_anchor|` in the `V^-1` norm.
pub fn uncertainty_bonus<S: Scalar>(
    g_cand: &GradientVector<S>,
    g_anchor: &GradientVector<S>,
    cov: &CovarianceState<S>,
) -> Result<S> {
    let d = g_cand.sub(g_anchor)?;
    let q = cov.inv_quad(d.as_slice())?;
    if q < S::lit(-1e-10) || q.is_nan() {
        return Err(Error::NumericalState(format!("inverse covariance is not positive definite (quadratic form {q})")));
    }
    Ok(q.max(S::zero()).sqrt())
}
