use std::process::ExitCode;

fn main() -> ExitCode {
    let mut failed = 0;
    for verdict in hallflow_validation::run_all() {
        println!("{verdict}");
        failed += usize::from(!verdict.passed);
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
