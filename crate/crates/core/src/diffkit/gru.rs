use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_cols, check_shape, col_sums, DiffError, Grads, Matrix, ModelParams, ParamId};

/// Gated recurrent unit, gate blocks ordered `[reset, update, candidate]`:
///
/// ```text
/// r = σ(x·Wx_r + bx_r + h·Wh_r + bh_r)
/// z = σ(x·Wx_z + bx_z + h·Wh_z + bh_z)
/// n = tanh(x·Wx_n + bx_n + r ⊙ (h·Wh_n + bh_n))
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
///
/// Sequences are stacked time-major: row `t·B + b` of an input or output
/// matrix is sample `b` at step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gru {
    pub wx: ParamId,
    pub wh: ParamId,
    pub bx: ParamId,
    pub bh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

/// Saved activations for backpropagation through time.
#[derive(Debug, Clone)]
pub struct GruCache {
    batch: usize,
    steps: usize,
    xs: Matrix,
    h_prev: Matrix,
    r: Matrix,
    z: Matrix,
    n: Matrix,
    hn: Matrix,
}

impl Gru {
    /// Uniform(−1/√H, 1/√H) initialization for all weights and biases.
    pub fn new(params: &mut ModelParams, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Gru {
        let k = 1.0 / (hidden as f64).sqrt();
        let mut init = |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| rng.random_range(-k..k));
        let wx = init(input, 3 * hidden);
        let wh = init(hidden, 3 * hidden);
        let bx = init(1, 3 * hidden);
        let bh = init(1, 3 * hidden);
        Gru {
            wx: params.add(format!("{name}.wx"), wx),
            wh: params.add(format!("{name}.wh"), wh),
            bx: params.add(format!("{name}.bx"), bx),
            bh: params.add(format!("{name}.bh"), bh),
            input,
            hidden,
        }
    }

    /// Run the cell over a stacked sequence; returns every hidden state,
    /// stacked the same way, plus the cache for [`Gru::backward`].
    pub fn forward(
        &self,
        p: &ModelParams,
        xs: &Matrix,
        batch: usize,
        h0: Option<&Matrix>,
    ) -> Result<(Matrix, GruCache), DiffError> {
        self.forward_conditioned(p, xs, batch, h0, None)
    }

    /// Like [`Gru::forward`] with a per-sequence term `cond` (`batch × 3H`)
    /// added to the input pre-activations at every step. Equivalent to
    /// appending a constant vector `c` to each input with `cond = c·W_c`,
    /// without paying for it at every step.
    pub fn forward_conditioned(
        &self,
        p: &ModelParams,
        xs: &Matrix,
        batch: usize,
        h0: Option<&Matrix>,
        cond: Option<&Matrix>,
    ) -> Result<(Matrix, GruCache), DiffError> {
        let (hs, cache) = self.run(p, xs, batch, h0, cond, true)?;
        Ok((hs, cache.expect("cache requested")))
    }

    /// Forward pass without a cache.
    pub fn infer(&self, p: &ModelParams, xs: &Matrix, batch: usize, h0: Option<&Matrix>) -> Result<Matrix, DiffError> {
        Ok(self.run(p, xs, batch, h0, None, false)?.0)
    }

    pub fn infer_conditioned(
        &self,
        p: &ModelParams,
        xs: &Matrix,
        batch: usize,
        h0: Option<&Matrix>,
        cond: Option<&Matrix>,
    ) -> Result<Matrix, DiffError> {
        Ok(self.run(p, xs, batch, h0, cond, false)?.0)
    }

    fn run(
        &self,
        p: &ModelParams,
        xs: &Matrix,
        batch: usize,
        h0: Option<&Matrix>,
        cond: Option<&Matrix>,
        keep: bool,
    ) -> Result<(Matrix, Option<GruCache>), DiffError> {
        check_cols("gru.forward", xs, self.input)?;
        if batch == 0 || !xs.nrows().is_multiple_of(batch) {
            return Err(DiffError::Shape {
                op: "gru.forward (rows not a multiple of batch)",
                expected: (batch, self.input),
                got: xs.dim(),
            });
        }
        let hd = self.hidden;
        let g3 = 3 * hd;
        let steps = xs.nrows() / batch;
        let rows = steps * batch;
        let mut gx = xs.dot(p.value(self.wx));
        gx += p.value(self.bx);
        if let Some(c) = cond {
            check_shape("gru.cond", c, (batch, g3))?;
            for (r, mut row) in gx.rows_mut().into_iter().enumerate() {
                row += &c.row(r % batch);
            }
        }
        let gx = gx.as_standard_layout().into_owned();
        let gx_s = gx.as_slice().expect("standard layout");
        let wh = p.value(self.wh);
        let bh = p.value(self.bh);
        let mut h = match h0 {
            Some(h0) => {
                check_shape("gru.h0", h0, (batch, hd))?;
                h0.as_standard_layout().into_owned()
            }
            None => Array2::zeros((batch, hd)),
        };
        let mut hs = Array2::zeros((rows, hd));
        let mut cache = keep.then(|| GruCache {
            batch,
            steps,
            xs: xs.to_owned(),
            h_prev: Array2::zeros((rows, hd)),
            r: Array2::zeros((rows, hd)),
            z: Array2::zeros((rows, hd)),
            n: Array2::zeros((rows, hd)),
            hn: Array2::zeros((rows, hd)),
        });
        let mut gh = Array2::<f64>::zeros((batch, g3));
        let (mut rz, mut n) = (vec![0.0; 2 * hd], vec![0.0; hd]);
        let simd = kernels::avx2();
        for t in 0..steps {
            general_mat_mul(1.0, &h, wh, 0.0, &mut gh);
            gh += bh;
            let gh_s = gh.as_slice().expect("standard layout");
            let base = t * batch;
            let h_s = h.as_slice_mut().expect("standard layout");
            let mut poison = 0.0;
            for b in 0..batch {
                let row = base + b;
                let (gxr, ghr) = (&gx_s[row * g3..(row + 1) * g3], &gh_s[b * g3..(b + 1) * g3]);
                let hrow = &mut h_s[b * hd..(b + 1) * hd];
                kernels::gates(simd, gxr, ghr, &mut rz, &mut n);
                let (r, z) = rz.split_at(hd);
                if let Some(c) = cache.as_mut() {
                    row_mut(&mut c.r, row).copy_from_slice(r);
                    row_mut(&mut c.z, row).copy_from_slice(z);
                    row_mut(&mut c.n, row).copy_from_slice(&n);
                    row_mut(&mut c.hn, row).copy_from_slice(&ghr[2 * hd..]);
                    row_mut(&mut c.h_prev, row).copy_from_slice(hrow);
                }
                poison += kernels::blend(simd, hrow, z, &n);
            }
            if poison.is_nan() {
                return Err(DiffError::NonFinite(format!("gru hidden state at step {t}")));
            }
            hs.slice_mut(s![base..base + batch, ..]).assign(&h);
        }
        Ok((hs, cache))
    }

    /// Backpropagation through time.
    ///
    /// `dhs` holds `dL/dh_t` for every stacked output row (omit when only the
    /// final state feeds the loss); `dh_last` is an extra gradient on the final
    /// state. Parameter gradients accumulate into `grads`. Returns the input
    /// gradients (stacked like the inputs) and `dL/dh0`.
    pub fn backward(
        &self,
        p: &ModelParams,
        cache: &GruCache,
        dhs: Option<&Matrix>,
        dh_last: Option<&Matrix>,
        grads: &mut Grads,
    ) -> Result<(Matrix, Matrix), DiffError> {
        let (dxs, dh0, _) = self.backward_conditioned(p, cache, dhs, dh_last, grads)?;
        Ok((dxs, dh0))
    }

    /// [`Gru::backward`] that also returns the gradient of the conditioning
    /// term of [`Gru::forward_conditioned`].
    pub fn backward_conditioned(
        &self,
        p: &ModelParams,
        cache: &GruCache,
        dhs: Option<&Matrix>,
        dh_last: Option<&Matrix>,
        grads: &mut Grads,
    ) -> Result<(Matrix, Matrix, Matrix), DiffError> {
        let hd = self.hidden;
        let g3 = 3 * hd;
        let (batch, steps) = (cache.batch, cache.steps);
        let rows = batch * steps;
        let dhs = match dhs {
            Some(d) => {
                check_shape("gru.backward dhs", d, (rows, hd))?;
                Some(d.as_standard_layout().into_owned())
            }
            None => None,
        };
        let dhs_s = dhs.as_ref().map(|d| d.as_slice().expect("standard layout"));
        let mut dh_next = match dh_last {
            Some(d) => {
                check_shape("gru.backward dh_last", d, (batch, hd))?;
                d.as_standard_layout().into_owned()
            }
            None => Array2::zeros((batch, hd)),
        };
        let wh_t = p.value(self.wh).t();
        let mut dgx = Array2::<f64>::zeros((rows, g3));
        let mut dgh = Array2::<f64>::zeros((rows, g3));
        let mut dh_direct = Array2::<f64>::zeros((batch, hd));
        let (cr, cz, cn, chn, chp) = (
            cache.r.as_slice().expect("standard layout"),
            cache.z.as_slice().expect("standard layout"),
            cache.n.as_slice().expect("standard layout"),
            cache.hn.as_slice().expect("standard layout"),
            cache.h_prev.as_slice().expect("standard layout"),
        );
        let simd = kernels::avx2();
        let zeros = vec![0.0; hd];
        for t in (0..steps).rev() {
            let base = t * batch;
            {
                let dgx_s = dgx.as_slice_mut().expect("standard layout");
                let dgh_s = dgh.as_slice_mut().expect("standard layout");
                let dn_s = dh_next.as_slice().expect("standard layout");
                let dd_s = dh_direct.as_slice_mut().expect("standard layout");
                for b in 0..batch {
                    let row = base + b;
                    let o = row * hd..(row + 1) * hd;
                    kernels::gate_grads(
                        simd,
                        &dn_s[b * hd..(b + 1) * hd],
                        dhs_s.map_or(&zeros[..], |d| &d[o.clone()]),
                        [&cr[o.clone()], &cz[o.clone()], &cn[o.clone()], &chn[o.clone()], &chp[o]],
                        &mut dgx_s[row * g3..(row + 1) * g3],
                        &mut dgh_s[row * g3..(row + 1) * g3],
                        &mut dd_s[b * hd..(b + 1) * hd],
                    );
                }
            }
            let dgh_t = dgh.slice(s![base..base + batch, ..]);
            dh_next.assign(&dh_direct);
            general_mat_mul(1.0, &dgh_t, &wh_t, 1.0, &mut dh_next);
        }
        *grads.get_mut(self.wh) += &cache.h_prev.t().dot(&dgh);
        *grads.get_mut(self.bh) += &col_sums(&dgh);
        *grads.get_mut(self.wx) += &cache.xs.t().dot(&dgx);
        *grads.get_mut(self.bx) += &col_sums(&dgx);
        let dxs = dgx.dot(&p.value(self.wx).t());
        let mut dcond = Array2::<f64>::zeros((batch, g3));
        for (r, row) in dgx.rows().into_iter().enumerate() {
            let mut acc = dcond.row_mut(r % batch);
            acc += &row;
        }
        Ok((dxs, dh_next, dcond))
    }
}

/// Per-row elementwise gate math. Each kernel is compiled twice and picked
/// at run time; without fused multiply-add both builds round identically.
mod kernels {
    use crate::diffkit::exp_poly;

    pub(super) fn avx2() -> bool {
        #[cfg(target_arch = "x86_64")]
        {
            std::arch::is_x86_feature_detected!("avx2")
        }
        #[cfg(not(target_arch = "x86_64"))]
        {
            false
        }
    }

    macro_rules! multiversion {
        ($($(#[$meta:meta])* fn $name:ident($($arg:ident: $ty:ty),* $(,)?) $(-> $ret:ty)? $body:block)*) => {$(
            $(#[$meta])*
            #[inline]
            pub(super) fn $name(simd: bool, $($arg: $ty),*) $(-> $ret)? {
                #[inline(always)]
                fn generic($($arg: $ty),*) $(-> $ret)? $body
                #[cfg(target_arch = "x86_64")]
                #[target_feature(enable = "avx2")]
                unsafe fn wide($($arg: $ty),*) $(-> $ret)? { generic($($arg),*) }
                #[cfg(target_arch = "x86_64")]
                if simd {
                    // SAFETY: `simd` comes from `avx2()`, which checked the CPU.
                    return unsafe { wide($($arg),*) };
                }
                let _ = simd;
                generic($($arg),*)
            }
        )*};
    }

    multiversion! {
        /// Reset and update gates into `rz`, candidate into `n`.
        fn gates(gx: &[f64], gh: &[f64], rz: &mut [f64], n: &mut [f64]) {
            let hd = n.len();
            let (gx, gh) = (&gx[..3 * hd], &gh[..3 * hd]);
            for ((o, &a), &c) in rz[..2 * hd].iter_mut().zip(&gx[..2 * hd]).zip(&gh[..2 * hd]) {
                *o = 1.0 / (1.0 + exp_poly(-(a + c)));
            }
            for (((o, &a), &c), &r) in n.iter_mut().zip(&gx[2 * hd..]).zip(&gh[2 * hd..]).zip(&rz[..hd]) {
                *o = 1.0 - 2.0 / (exp_poly(2.0 * (a + r * c)) + 1.0);
            }
        }

        /// `h ← (1 − z) ⊙ n + z ⊙ h`; the return value is NaN when any new
        /// state is not finite.
        fn blend(h: &mut [f64], z: &[f64], n: &[f64]) -> f64 {
            let mut poison = 0.0;
            for ((hv, &zj), &nj) in h.iter_mut().zip(z).zip(n) {
                *hv = (1.0 - zj) * nj + zj * *hv;
                poison += *hv * 0.0;
            }
            poison
        }

        /// Pre-activation gradients of one row given `dL/dh'`.
        fn gate_grads(
            dn: &[f64],
            dhs: &[f64],
            saved: [&[f64]; 5],
            gx: &mut [f64],
            gh: &mut [f64],
            dd: &mut [f64]
        ) {
            let hd = dd.len();
            let [r, z, n, hn, hp] = saved.map(|m| &m[..hd]);
            let (dn, dhs) = (&dn[..hd], &dhs[..hd]);
            let (gx, gh) = (&mut gx[..3 * hd], &mut gh[..3 * hd]);
            for j in 0..hd {
                let dh = dn[j] + dhs[j];
                let dan = dh * (1.0 - z[j]) * (1.0 - n[j] * n[j]);
                let daz = dh * (hp[j] - n[j]) * z[j] * (1.0 - z[j]);
                let dar = dan * hn[j] * r[j] * (1.0 - r[j]);
                gx[j] = dar;
                gx[hd + j] = daz;
                gx[2 * hd + j] = dan;
                gh[j] = dar;
                gh[hd + j] = daz;
                gh[2 * hd + j] = dan * r[j];
                dd[j] = dh * z[j];
            }
        }
    }
}

fn row_mut(m: &mut Matrix, row: usize) -> &mut [f64] {
    m.slice_mut(s![row, ..]).into_slice().expect("contiguous row")
}

/// Rows belonging to the last step of a stacked sequence.
pub fn last_step(hs: &Matrix, batch: usize) -> Matrix {
    let n = hs.nrows();
    hs.slice(s![n - batch..n, ..]).to_owned()
}


#[cfg(test)]
mod gradient_tests {
    use super::*;
    use crate::diffkit::{max_matrix_error, max_param_error, numeric_gradient, FD_STEP};
    use crate::seed;

    #[test]
    fn matches_finite_differences() {
        let mut rng = seed::rng(9);
        let mut p = ModelParams::new();
        let g = Gru::new(&mut p, "g", 3, 4, &mut rng);
        let (batch, steps) = (2, 5);
        let xs = Array2::from_shape_fn((batch * steps, 3), |_| rng.random_range(-1.0..1.0));
        let h0 = Array2::from_shape_fn((batch, 4), |_| rng.random_range(-0.5..0.5));
        let w_all = Array2::from_shape_fn((batch * steps, 4), |_| rng.random_range(-1.0..1.0));
        let w_last = Array2::from_shape_fn((batch, 4), |_| rng.random_range(-1.0..1.0));
        let loss = |p: &ModelParams, xs: &Matrix, h0: &Matrix| {
            let hs = g.infer(p, xs, batch, Some(h0)).unwrap();
            (&hs * &w_all).sum() + (last_step(&hs, batch) * &w_last).sum()
        };
        let (_, cache) = g.forward(&p, &xs, batch, Some(&h0)).unwrap();
        let mut grads = p.zero_grads_like();
        let (dxs, dh0) = g.backward(&p, &cache, Some(&w_all), Some(&w_last), &mut grads).unwrap();
        assert!(max_param_error(&p, &grads, FD_STEP, |p| loss(p, &xs, &h0)) < 1e-4);
        let nx = numeric_gradient(&mut xs.clone(), FD_STEP, |x| loss(&p, x, &h0));
        assert!(max_matrix_error(&dxs, &nx) < 1e-4);
        let nh = numeric_gradient(&mut h0.clone(), FD_STEP, |h| loss(&p, &xs, h));
        assert!(max_matrix_error(&dh0, &nh) < 1e-4);
    }

    #[test]
    fn conditioning_matches_finite_differences() {
        let mut rng = seed::rng(12);
        let mut p = ModelParams::new();
        let g = Gru::new(&mut p, "g", 2, 3, &mut rng);
        let (batch, steps) = (2, 4);
        let xs = Array2::from_shape_fn((batch * steps, 2), |_| rng.random_range(-1.0..1.0));
        let cond = Array2::from_shape_fn((batch, 9), |_| rng.random_range(-1.0..1.0));
        let w_all = Array2::from_shape_fn((batch * steps, 3), |_| rng.random_range(-1.0..1.0));
        let loss = |p: &ModelParams, c: &Matrix| (g.infer_conditioned(p, &xs, batch, None, Some(c)).unwrap() * &w_all).sum();
        let (_, cache) = g.forward_conditioned(&p, &xs, batch, None, Some(&cond)).unwrap();
        let mut grads = p.zero_grads_like();
        let (_, _, dcond) = g.backward_conditioned(&p, &cache, Some(&w_all), None, &mut grads).unwrap();
        assert!(max_param_error(&p, &grads, FD_STEP, |p| loss(p, &cond)) < 1e-4);
        let nc = numeric_gradient(&mut cond.clone(), FD_STEP, |c| loss(&p, c));
        assert!(max_matrix_error(&dcond, &nc) < 1e-4);
    }
}
