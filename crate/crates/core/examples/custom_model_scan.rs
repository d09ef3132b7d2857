//! Scan a family given only as sampled matrices, the way a JSON model file
//! is consumed by `evogen scan --model-file`.

use evogen::models::{ssh_block_family, CustomTable};
use evogen::scan::{scan, write_csv, ScanConfig, ScanGauge};

fn main() {
    let qs: Vec<f64> = (0..=60).map(|k| 0.05 * k as f64).collect();
    let table = CustomTable::from_family(&ssh_block_family(2.5), &qs, false);
    println!("{}\n", serde_json::to_string(&CustomTable { q: qs[..2].to_vec(), h: table.h[..2].to_vec(), ..table.clone() }).unwrap());

    let mut cfg = ScanConfig::new("custom", ScanGauge::RegularDp).with_sweep("q:0.5:2.5:0.25".parse().unwrap());
    cfg.custom = Some(table);
    let records = scan(&cfg).unwrap();
    write_csv(&records, std::io::stdout().lock()).unwrap();
}
