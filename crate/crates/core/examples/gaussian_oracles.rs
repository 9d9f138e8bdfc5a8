use kmac::estimators::eta_hat;
use kmac::geograph::build_knn;
use kmac::oracles::{eta_population_mc, t1_gaussian, t2_gaussian, GaussianPairSpec};
use kmac::{KernelSpec, TieRule};

fn main() -> kmac::Result<()> {
    for rho in [0.3, 0.6, 0.9] {
        let spec = GaussianPairSpec::new(rho, 2);
        let (x, y) = spec.sample(3000, 4)?;
        let g = build_knn(&x, 20, TieRule::ByIndex)?;
        let t1 = eta_hat(&x, &y, &KernelSpec::distance(), &g)?.value;
        let t2 = eta_hat(&x, &y, &KernelSpec::Linear, &g)?.value;
        let pop = eta_population_mc(&spec, &KernelSpec::gaussian(), 20_000, 4)?;
        println!(
            "rho {rho}: distance {t1:.4} (exact {:.4})  linear {t2:.4} (exact {:.4})  gaussian population {:.4} +- {:.4}",
            t1_gaussian(rho),
            t2_gaussian(rho),
            pop.value(),
            pop.combined_se()
        );
    }
    Ok(())
}
