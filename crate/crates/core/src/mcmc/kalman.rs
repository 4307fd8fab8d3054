//! Forward-filtering backward-sampling for the AR(1) log-fluctuation path.
//!
//! Observations enter as `z_i = h_{t_i} + e_i` (or `z_i = b + h_{t_i} + e_i`
//! with an unknown constant level `b`), with `e_i ~ N(0, var_i)`. The arrays
//! `obs_t`, `z` and `var` are aligned and sorted by `t`.

use rand::Rng;

use crate::model::dist::std_normal;

const MIN_VAR: f64 = 1e-300;

/// Draws the whole path `h_0..h_{n-1}` from its conditional given the
/// observations, under the stationary AR(1) prior.
#[allow(clippy::too_many_arguments)]
pub(crate) fn ffbs_path<R: Rng + ?Sized>(
    obs_t: &[usize],
    z: &[f64],
    var: &[f64],
    rho: f64,
    sigma: f64,
    rng: &mut R,
    out: &mut [f64],
    scratch: &mut Vec<(f64, f64)>,
) {
    let n = out.len();
    let s2 = sigma * sigma;
    scratch.clear();
    let (mut m, mut p) = (0.0, s2 / (1.0 - rho * rho));
    let mut j = 0;
    for t in 0..n {
        if t > 0 {
            m *= rho;
            p = rho * rho * p + s2;
        }
        while j < obs_t.len() && obs_t[j] == t {
            let k = p / (p + var[j]);
            m += k * (z[j] - m);
            p *= 1.0 - k;
            j += 1;
        }
        scratch.push((m, p.max(MIN_VAR)));
    }
    let (m, p) = scratch[n - 1];
    out[n - 1] = m + p.sqrt() * std_normal(rng);
    for t in (0..n - 1).rev() {
        let (m, p) = scratch[t];
        out[t] = backward_step(m, p, rho, s2, out[t + 1], rng);
    }
}

/// Draw of `h_t` from its filtered marginal `N(m, p)` combined with the
/// transition to the already drawn `h_{t+1}`.
#[inline]
fn backward_step<R: Rng + ?Sized>(
    m: f64,
    p: f64,
    rho: f64,
    s2: f64,
    next: f64,
    rng: &mut R,
) -> f64 {
    let prec = 1.0 / p + rho * rho / s2;
    let mean = (m / p + rho * next / s2) / prec;
    mean + (1.0 / prec).sqrt() * std_normal(rng)
}

/// Joint draw of a constant level `b ~ N(b_mean, b_var)` and the path.
/// Returns `b`; the path is written to `out`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn ffbs_level_path<R: Rng + ?Sized>(
    obs_t: &[usize],
    y: &[f64],
    var: &[f64],
    b_mean: f64,
    b_var: f64,
    rho: f64,
    sigma: f64,
    rng: &mut R,
    out: &mut [f64],
    scratch: &mut Vec<[f64; 5]>,
) -> f64 {
    let n = out.len();
    let s2 = sigma * sigma;
    scratch.clear();
    // (m_b, m_h, P_bb, P_bh, P_hh)
    let (mut mb, mut mh) = (b_mean, 0.0);
    let (mut pbb, mut pbh, mut phh) = (b_var, 0.0, s2 / (1.0 - rho * rho));
    let mut j = 0;
    for t in 0..n {
        if t > 0 {
            mh *= rho;
            pbh *= rho;
            phh = rho * rho * phh + s2;
        }
        while j < obs_t.len() && obs_t[j] == t {
            let s = pbb + 2.0 * pbh + phh + var[j];
            let kb = (pbb + pbh) / s;
            let kh = (pbh + phh) / s;
            let e = y[j] - mb - mh;
            mb += kb * e;
            mh += kh * e;
            let (nbb, nbh, nhh) = (pbb - kb * kb * s, pbh - kb * kh * s, phh - kh * kh * s);
            pbb = nbb.max(MIN_VAR);
            pbh = nbh;
            phh = nhh.max(MIN_VAR);
            j += 1;
        }
        scratch.push([mb, mh, pbb, pbh, phh]);
    }
    // Joint draw of (b, h_{n-1}).
    let [mb, mh, pbb, pbh, phh] = scratch[n - 1];
    let b = mb + pbb.sqrt() * std_normal(rng);
    let cond_var = (phh - pbh * pbh / pbb).max(MIN_VAR);
    out[n - 1] = mh + pbh / pbb * (b - mb) + cond_var.sqrt() * std_normal(rng);
    // Given b, each filtered h_t marginal is conditioned on b before the
    // usual backward step.
    for t in (0..n - 1).rev() {
        let [mb, mh, pbb, pbh, phh] = scratch[t];
        let m = mh + pbh / pbb * (b - mb);
        let p = (phh - pbh * pbh / pbb).max(MIN_VAR);
        out[t] = backward_step(m, p, rho, s2, out[t + 1], rng);
    }
    b
}
