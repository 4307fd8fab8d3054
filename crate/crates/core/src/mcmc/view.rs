use super::chains::{names, DrawSet};
use super::McmcError;
use crate::model::{omega_at, CountrySlot, ModelKind, ModelSpec, TransitionParams};

enum Beta {
    Fixed(f64),
    Drawn(usize),
}

/// Column lookup for one country's parameters in a draw set.
pub struct CountryDraws<'a> {
    draws: &'a DrawSet,
    beta: Beta,
    eta_start: i32,
    eta_col: usize,
    eta_len: usize,
    transition: Option<[usize; 5]>,
    delta: Option<usize>,
}

impl<'a> CountryDraws<'a> {
    pub fn new(
        draws: &'a DrawSet,
        spec: &ModelSpec,
        slot: &CountrySlot,
    ) -> Result<Self, McmcError> {
        let c = &slot.code;
        let col = |name: String| {
            draws
                .index_of(&name)
                .ok_or(McmcError::UnknownParameter(name))
        };
        let beta = if spec.kind.samples_beta() {
            Beta::Drawn(col(names::beta(c))?)
        } else {
            Beta::Fixed(spec.beta_hat(c)?)
        };
        let eta_col = col(names::eta(c, slot.start_year))?;
        let eta_len = (slot.end_year - slot.start_year + 1) as usize;
        let last = col(names::eta(c, slot.end_year))?;
        if last != eta_col + eta_len - 1 {
            return Err(McmcError::ChainFile(format!(
                "eta columns of {c} are not contiguous"
            )));
        }
        let transition = if spec.kind.has_transition() {
            Some([
                col(names::gamma0(c))?,
                col(names::lambda(1, c))?,
                col(names::lambda(2, c))?,
                col(names::lambda(3, c))?,
                col(names::xi(c))?,
            ])
        } else {
            None
        };
        let delta = if spec.kind.has_indicator() {
            Some(col(names::delta(c))?)
        } else {
            None
        };
        debug_assert!(spec.kind != ModelKind::M4 || delta.is_none());
        Ok(CountryDraws {
            draws,
            beta,
            eta_start: slot.start_year,
            eta_col,
            eta_len,
            transition,
            delta,
        })
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    pub fn beta(&self, g: usize) -> f64 {
        match self.beta {
            Beta::Fixed(b) => b,
            Beta::Drawn(i) => self.draws.column(i)[g],
        }
    }

    pub fn eta_years(&self) -> std::ops::RangeInclusive<i32> {
        self.eta_start..=self.eta_start + self.eta_len as i32 - 1
    }

    pub fn eta(&self, g: usize, year: i32) -> Option<f64> {
        let k = year.checked_sub(self.eta_start)?;
        if k < 0 || k as usize >= self.eta_len {
            return None;
        }
        Some(self.draws.column(self.eta_col + k as usize)[g])
    }

    pub fn transition(&self, g: usize) -> Option<TransitionParams> {
        let idx = self.transition?;
        let v = idx.map(|i| self.draws.column(i)[g]);
        let delta = self.delta.is_none_or(|i| self.draws.column(i)[g] > 0.5);
        Some(TransitionParams::new(v[0], v[1], v[2], v[3], v[4], delta))
    }

    /// `δ Ω` at `year`, zero without a transition.
    pub fn inflation(&self, g: usize, year: f64) -> f64 {
        match self.transition(g) {
            Some(tp) if tp.delta => omega_at(&tp, year),
            _ => 0.0,
        }
    }

    /// SRB at a year inside the stored fluctuation range.
    pub fn theta(&self, g: usize, year: i32) -> Option<f64> {
        Some(self.beta(g) * self.eta(g, year)? + self.inflation(g, year as f64))
    }
}
