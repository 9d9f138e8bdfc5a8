use kmac::inference::{dcor2, dcov_test, hsic_test, permutation_test};
use kmac::oracles::{sample_setting, SettingName, SettingSpec};
use kmac::{EstimatorKind, GraphSpec, KernelSpec};

fn main() -> kmac::Result<()> {
    for name in [SettingName::Linear, SettingName::Sinusoidal] {
        let (x, y) = sample_setting(&SettingSpec::new(name, 0.2, 300, 8))?;
        let k = permutation_test(
            EstimatorKind::Standard,
            &x,
            &y,
            &KernelSpec::distance(),
            &GraphSpec::knn(1),
            None,
            999,
            1,
        )?;
        let d = dcov_test(&x, &y, 999, 1)?;
        let h = hsic_test(&x, &y, &KernelSpec::gaussian(), 999, 1)?;
        println!(
            "{:<11} dcor^2 {:.4}  p(kmac) {:.3}  p(dcov) {:.3}  p(hsic) {:.3}",
            name.to_string(),
            dcor2(&x, &y)?,
            k.p_value,
            d.p_value,
            h.p_value
        );
    }
    Ok(())
}
