//! Writes a ready-to-use dataset for trying the CLI: a directory of
//! demonstration CSV files plus a small disturbance script.
//!
//! ```text
//! cargo run -p impdmp-cli --example gen_demos -- demos/
//! impdmp learn demos/ --out bundle.json
//! ```

use std::fs;
use std::path::PathBuf;

use impdmp_core::preprocess::write_demonstration_csv;
use impdmp_core::synthetic::{pouring_demos, SyntheticConfig, VarianceShape};

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("demos"));
    fs::create_dir_all(&dir).expect("create output directory");

    let config = SyntheticConfig {
        shape: VarianceShape::Pinched,
        ..SyntheticConfig::default()
    };
    let demos = pouring_demos(&config).expect("generate demonstrations");
    for (i, demo) in demos.iter().enumerate() {
        let path = dir.join(format!("demo_{i:02}.csv"));
        write_demonstration_csv(&path, demo).expect("write demonstration");
        println!("wrote {} ({} rows)", path.display(), demo.samples().len());
    }

    let script = dir.join("disturbances.json");
    fs::write(
        &script,
        concat!(
            "[\n",
            "  { \"t_on\": 2.0, \"t_off\": 4.0, \"force\": [4.0, 0.0, 0.0], \"torque\": [0.0, 0.0, 0.0] },\n",
            "  { \"t_on\": 6.0, \"t_off\": 7.0, \"force\": [0.0, 0.0, -3.0], \"torque\": [0.0, 0.1, 0.0] }\n",
            "]\n"
        ),
    )
    .expect("write disturbance script");
    println!("wrote {}", script.display());
}
