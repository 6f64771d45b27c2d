//! Runs every acceptance criterion and prints one verdict line each.
//! Exits nonzero if any criterion fails.

use bifree_core::verify::{run_all, VerifyConfig};

fn main() {
    let results = run_all(&VerifyConfig::default());
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
