use super::{
    omega_at, BaselineParams, FluctuationParams, ModelError, ModelKind, ModelLayout, ModelSpec,
    TransitionParams,
};
use crate::likelihood::ThetaField;

/// SRB for every slot and year of its fluctuation path.
///
/// M1 and M2Joint use the sampled baselines in `b`; the other fits use the
/// M1 medians carried in `spec`. M4 ignores the indicator and always adds
/// the transition.
pub fn theta_assemble(
    spec: &ModelSpec,
    layout: &ModelLayout,
    b: &BaselineParams,
    f: &FluctuationParams,
    tp: Option<&[Option<TransitionParams>]>,
) -> Result<ThetaField, ModelError> {
    spec.validate()?;
    if f.eta.len() != layout.slots.len() {
        return Err(ModelError::Layout(format!(
            "{} fluctuation paths for {} countries",
            f.eta.len(),
            layout.slots.len()
        )));
    }
    let kind = spec.kind;
    if kind.has_transition() && tp.is_none_or(|t| t.len() != layout.slots.len()) {
        return Err(ModelError::Layout(format!(
            "{kind} needs one transition per country"
        )));
    }
    let mut field = ThetaField::default();
    for (i, slot) in layout.slots.iter().enumerate() {
        let beta = if kind.samples_beta() {
            b.beta[i]
        } else {
            spec.beta_hat(&slot.code)?
        };
        let transition = if kind.has_transition() {
            tp.and_then(|t| t[i])
        } else {
            None
        };
        let path = &f.eta[i];
        for (k, &eta) in path.values.iter().enumerate() {
            let year = path.start_year + k as i32;
            let base = beta * eta;
            let theta = match transition {
                Some(t) if kind == ModelKind::M4 || t.delta => base + omega_at(&t, year as f64),
                _ => base,
            };
            field.insert(&slot.code, year, theta);
        }
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CountrySlot, EtaPath, FixedInputs, Phi};

    fn setup(kind: ModelKind) -> (ModelSpec, ModelLayout, BaselineParams, FluctuationParams) {
        let mut fixed = FixedInputs {
            phi_hat: Some(Phi {
                rho: 0.5,
                sigma_eps: 0.01,
            }),
            sigma_beta_hat: Some(0.01),
            ..Default::default()
        };
        fixed.beta_hat.insert("AAA".into(), 1.05);
        fixed.beta_region_hat.insert("AAA".into(), 1.05);
        fixed.zeta_hat = Some(crate::model::ZetaHat {
            mu_xi: 0.05,
            sigma_xi: 0.03,
            mu_lambda: [10.0; 3],
            sigma_lambda: [3.0; 3],
            sigma_gamma: 5.0,
        });
        let spec = if kind == ModelKind::M1 {
            ModelSpec::m1()
        } else {
            ModelSpec::new(kind, fixed).for_country("AAA")
        };
        let layout = ModelLayout {
            kind,
            regions: vec!["R".into()],
            slots: vec![CountrySlot {
                code: "AAA".into(),
                region: 0,
                start_year: 1995,
                end_year: 2000,
                has_data: true,
                anchors: Some((1970.0, 1990.0)),
            }],
        };
        let b = BaselineParams {
            beta_region: vec![1.05],
            beta: vec![1.05],
            sigma_beta: 0.01,
        };
        let f = FluctuationParams {
            rho: 0.5,
            sigma_eps: 0.01,
            eta: vec![EtaPath {
                start_year: 1995,
                values: vec![1.0, 1.01, 0.99, 1.0, 1.002, 0.998],
            }],
        };
        (spec, layout, b, f)
    }

    #[test]
    fn arithmetic_example() {
        let (spec, layout, b, mut f) = setup(ModelKind::M2);
        f.eta[0].values[0] = 1.0;
        let tp = [Some(TransitionParams::new(
            1980.0, 5.0, 30.0, 5.0, 0.10, true,
        ))];
        let theta = theta_assemble(&spec, &layout, &b, &f, Some(&tp)).unwrap();
        assert!((theta.get("AAA", 1995).unwrap() - 1.15).abs() < 1e-15);
    }

    #[test]
    fn indicator_off_is_baseline_times_eta_bitwise() {
        let (spec, layout, b, f) = setup(ModelKind::M2);
        let tp = [Some(TransitionParams::new(
            1980.0, 5.0, 30.0, 5.0, 0.10, false,
        ))];
        let theta = theta_assemble(&spec, &layout, &b, &f, Some(&tp)).unwrap();
        for (k, &eta) in f.eta[0].values.iter().enumerate() {
            assert_eq!(theta.get("AAA", 1995 + k as i32).unwrap(), 1.05 * eta);
        }
    }

    #[test]
    fn m4_with_zero_inflation_equals_m3() {
        let (spec4, layout, b, f) = setup(ModelKind::M4);
        let (spec3, _, _, _) = setup(ModelKind::M3);
        let tp = [Some(TransitionParams::new(
            1990.0, 5.0, 3.0, 5.0, 0.0, false,
        ))];
        let m4 = theta_assemble(&spec4, &layout, &b, &f, Some(&tp)).unwrap();
        let m3 = theta_assemble(&spec3, &layout, &b, &f, None).unwrap();
        assert_eq!(m4, m3);
    }

    #[test]
    fn m4_ignores_indicator() {
        let (spec, layout, b, f) = setup(ModelKind::M4);
        let tp = [Some(TransitionParams::new(
            1990.0, 0.0, 30.0, 0.0, 0.1, false,
        ))];
        let theta = theta_assemble(&spec, &layout, &b, &f, Some(&tp)).unwrap();
        assert!((theta.get("AAA", 1995).unwrap() - 1.15).abs() < 1e-15);
    }

    #[test]
    fn missing_fixed_input() {
        let (mut spec, layout, b, f) = setup(ModelKind::M3);
        spec.fixed.beta_hat.clear();
        assert!(matches!(
            theta_assemble(&spec, &layout, &b, &f, None),
            Err(ModelError::MissingFixedInput { .. })
        ));
        spec.fixed.phi_hat = None;
        assert!(matches!(
            theta_assemble(&spec, &layout, &b, &f, None),
            Err(ModelError::MissingFixedInput { .. })
        ));
    }
}
