use std::time::Instant;

use kmac::estimators::{clt_scaling_linear, eta_hat_lin};
use kmac::geograph::build_knn;
use kmac::oracles::{sample_setting, SettingName, SettingSpec};
use kmac::stats::normal_sf;
use kmac::{KernelSpec, TieRule};

fn main() -> kmac::Result<()> {
    let kernel = KernelSpec::distance();
    for n in [10_000, 50_000, 200_000] {
        let (x, y) = sample_setting(&SettingSpec::new(SettingName::Sinusoidal, 0.3, n, 1))?;
        let start = Instant::now();
        let g = build_knn(&x, 1, TieRule::ByIndex)?;
        let e = eta_hat_lin(&x, &y, &kernel, &g)?;
        let s = clt_scaling_linear(&y, &kernel, &g)?;
        let z = e.scaled_numerator() / s.s2.sqrt();
        println!(
            "n = {n:>7}  eta_lin = {:.4}  z = {z:>7.2}  p = {:.2e}  {:.0} ms",
            e.value,
            normal_sf(z),
            start.elapsed().as_secs_f64() * 1e3
        );
    }
    Ok(())
}
