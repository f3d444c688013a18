// Drives the command-line front end in-process.

use colorlab::cli;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let commands: [&[&str]; 4] = [
        &["thresholds", "--k", "10"],
        &["fvalue", "--k", "3", "--d", "4", "--matrix", "barycenter"],
        &["moments", "--n", "4", "--m", "3", "--k", "3", "--order", "2", "--exact"],
        &["partition", "--k", "3", "--matrix", "identity", "--eta", "0.01"],
    ];
    for cmd in commands {
        let argv: Vec<String> = std::iter::once("colorlab").chain(cmd.iter().copied()).map(String::from).collect();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = cli::run_with_io(&argv, &mut out, &mut err);
        print!("$ colorlab {}\n{}", cmd.join(" "), String::from_utf8(out)?);
        if code != 0 {
            return Err(format!("exit {code}: {}", String::from_utf8(err)?).into());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
