use kmac::geograph::{build_knn, build_mst};
use kmac::rng::stream_rng;
use kmac::{DataMatrix, GraphSpec, TieRule};
use rand::Rng;

fn main() -> kmac::Result<()> {
    let mut rng = stream_rng(11, 0);
    let v: Vec<f64> = (0..400).map(|_| rng.random::<f64>()).collect();
    let x = DataMatrix::new(200, 2, v)?;

    for g in [
        build_knn(&x, 1, TieRule::ByIndex)?,
        build_knn(&x, 10, TieRule::ByIndex)?,
        build_mst(&x)?,
    ] {
        let s = g.stats();
        let d = g.assumption_report(&x)?;
        println!(
            "{:<10} edges {:>5}  connected {:<5}  g1 {:.3} g2 {:.3} g3 {:.3}  {d:?}",
            g.kind().to_string(),
            g.edge_count(),
            g.is_connected(),
            s.g1,
            s.g2,
            s.g3
        );
    }

    let spec: GraphSpec = "knn:k=3".parse()?;
    println!("vertex 0 under {spec}: {:?}", spec.build(&x)?.neighbors(0));
    Ok(())
}
