//! Drives the command-line pipeline from code: OAT then CSB on a TOML
//! problem, written to a temporary directory.
//!
//! ```bash
//! cargo run --release --example run_config -- examples/configs/identity.toml
//! ```

fn main() {
    let config = std::env::args().nth(1).unwrap_or_else(|| "examples/configs/identity.toml".into());
    let out = std::env::temp_dir().join("csb-lab-example");
    for cmd in ["oat", "csb"] {
        let dir = out.join(cmd);
        let code = csb::cli::run_from(["csb-lab", cmd, "--config", &config, "--out", dir.to_str().unwrap()]);
        println!("{cmd}: exit {code}, artifacts in {}", dir.display());
        if code != 0 {
            std::process::exit(code);
        }
        print!("{}", std::fs::read_to_string(dir.join("summary.json")).unwrap());
    }
}
