use kmac::harness::{
    run_power_curve, run_qq_null, write_table, OutputFormat, PowerConfig, PowerTest, QqConfig,
    Scale,
};
use kmac::oracles::SettingName;

fn main() -> kmac::Result<()> {
    let dir = std::env::temp_dir().join("kmac-experiments");

    let qq = QqConfig::new(
        SettingName::NullSettingI,
        "standard/gaussian:sigma=1/mst".parse()?,
        Scale::Desk,
        1,
    );
    let qq = run_qq_null(&QqConfig {
        n: 200,
        reps: 300,
        ..qq
    })?;
    println!("qq: KS distance {:.4}", qq.summary["ks_distance"]);
    write_table(&qq, dir.join("qq.csv"), OutputFormat::Csv)?;

    let mut power = PowerConfig::new(SettingName::Step, Scale::Desk, 2);
    power.n = 100;
    power.b = 199;
    power.reps = 50;
    power.tests = vec!["linear/distance:alpha=1/knn:k=1".parse()?, PowerTest::Dcor];
    let table = run_power_curve(&power)?;
    for row in &table.rows {
        println!("lambda {:.1}: {:?}", row[0], &row[1..]);
    }
    write_table(&table, dir.join("power.json"), OutputFormat::Json)?;
    println!("tables in {}", dir.display());
    Ok(())
}
