use kmac::kernels::{kernel_self_diag, Kernel};
use kmac::{DataMatrix, KernelSpec};

fn main() -> kmac::Result<()> {
    let a = [0.2, -1.0];
    let b = [1.5, 0.7];
    for spec in [
        "gaussian:sigma=1",
        "laplacian:sigma=2",
        "distance:alpha=1",
        "distance:alpha=1.5",
        "linear",
    ] {
        let k: KernelSpec = spec.parse()?;
        println!(
            "{:<20} K(a,b) = {:>8.4}  characteristic: {}",
            k.to_string(),
            k.eval(&a, &b),
            k.is_characteristic()
        );
    }

    let y = DataMatrix::from_rows(&[[0.0, 0.0], [1.0, 2.0], [3.0, -1.0], [0.5, 0.5]])?;
    let median = KernelSpec::gaussian_median_heuristic(&y)?;
    println!("median heuristic: {median}");
    println!(
        "diagonal under distance kernel: {:?}",
        kernel_self_diag(&KernelSpec::distance(), &y)
    );
    Ok(())
}
