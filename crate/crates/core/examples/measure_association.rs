use kmac::estimators::{eta_hat, t_n_energy};
use kmac::oracles::{sample_setting, SettingName, SettingSpec};
use kmac::{GraphSpec, KernelSpec};

fn main() -> kmac::Result<()> {
    let kernel = KernelSpec::distance();
    let graph = GraphSpec::knn(1);
    println!(
        "{:<14} {:>6} {:>10} {:>10}",
        "setting", "lambda", "eta_hat", "T_n"
    );
    for name in SettingName::POWER {
        for lambda in [0.0, 0.5, 1.0] {
            let (x, y) = sample_setting(&SettingSpec::new(name, lambda, 1000, 7))?;
            let g = graph.build(&x)?;
            let e = eta_hat(&x, &y, &kernel, &g)?;
            let t = t_n_energy(&x, &y, &g)?;
            println!(
                "{:<14} {lambda:>6.1} {:>10.4} {:>10.4}",
                name.to_string(),
                e.value,
                t.value
            );
        }
    }
    Ok(())
}
