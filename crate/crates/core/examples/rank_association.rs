use kmac::oracles::{sample_setting, SettingName, SettingSpec};
use kmac::ranks::{chatterjee_xi, eta_hat_rank, halton, lattice1d, rank_transform};
use kmac::{DataMatrix, GraphSpec, KernelSpec};

fn main() -> kmac::Result<()> {
    let (x, y) = sample_setting(&SettingSpec::new(SettingName::Semicircular, 0.2, 800, 3))?;
    let (gx, gy) = (halton(800, 2)?, halton(800, 2)?);
    let ranks = rank_transform(&x, &gx)?;
    println!("first ranks: {:?} {:?}", ranks.row(0), ranks.row(1));
    let e = eta_hat_rank(
        &x,
        &y,
        &KernelSpec::gaussian(),
        &GraphSpec::knn(1),
        &gx,
        &gy,
    )?;
    println!("rank estimate on 2-d data: {:.4}", e.value);

    let x1 = DataMatrix::from_column(&x.column(0));
    let y1 = DataMatrix::from_column(&y.column(0));
    let lattice = lattice1d(800)?;
    let e = eta_hat_rank(
        &x1,
        &y1,
        &KernelSpec::MinCdf,
        &GraphSpec::knn(1),
        &lattice,
        &lattice,
    )?;
    println!(
        "min-kernel rank estimate {:.4} vs xi {:.4}",
        e.value,
        chatterjee_xi(&x1, &y1)?
    );
    Ok(())
}
