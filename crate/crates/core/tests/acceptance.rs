//! One line per acceptance criterion. Criteria listed in `KNOWN_FAILURES`
//! are reported as failing and must keep failing; any other failure, or a
//! known failure that starts passing, makes the target exit nonzero.

use equipart::verify::Verifier;
use std::process::ExitCode;

/// λ_β at β = 2560 sits near 9.2 on the level 4 octahedral mesh.
const KNOWN_FAILURES: [usize; 1] = [5];

fn main() -> ExitCode {
    let outcomes = Verifier::new().run_all(false);
    let mut unexpected = Vec::new();
    for o in &outcomes {
        println!("{o}");
        if o.passed == KNOWN_FAILURES.contains(&o.id) {
            unexpected.push(o.id);
        }
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("acceptance: {passed}/{} criteria pass", outcomes.len());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected outcome for criteria {unexpected:?}");
        ExitCode::FAILURE
    }
}
