//! Builds a manifest in code, runs it as the binary would, and writes the artifacts.

use riesz_adams::catalog;
use riesz_adams::manifest::{self, Manifest, RunOptions};

fn main() -> riesz_adams::Result<()> {
    for p in catalog::list(Some("domain")) {
        println!("{p}");
    }
    let m = Manifest::parse(r#"{"command": "domain-check", "parameters": {"domain": "unit-disk", "samples": 5000}, "seed": 3}"#)?;
    let artifacts = manifest::run(&m, &RunOptions::default())?;
    println!("status {:?}, exit code {}", artifacts.status, artifacts.status.exit_code());
    println!("{}", serde_json::to_string_pretty(&artifacts.verdict).expect("verdict serializes"));
    let prefix = std::env::temp_dir().join("riesz-adams-example").to_string_lossy().into_owned();
    for path in artifacts.write(&prefix)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
