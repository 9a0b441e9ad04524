use std::process::ExitCode;

use dvfsim::experiments::acceptance;
use dvfsim::powermodel::CalibrationProfile;

fn main() -> ExitCode {
    let profile = CalibrationProfile::default();
    let results = acceptance::run_all(&profile);
    println!("\nrunning {} acceptance criteria", results.len());
    for r in &results {
        println!("{r}");
    }
    let failed: Vec<u8> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    assert_eq!(results.len(), 13);
    if failed.is_empty() {
        println!("acceptance: all 13 criteria passed\n");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}\n");
        ExitCode::FAILURE
    }
}
