//! Drive a subcommand from a TOML document, as the command-line tool does.

use relarb::io::commands::{execute, Subcommand};
use relarb::io::config::parse_config_with_overrides;

const CONFIG: &str = r#"
T = 1.0
dt = 0.002
n_paths = 200
pilot_paths = 50
seed = 3

[model]
kind = "vsm"
n = 5
alpha = 0.5

[output]
format = "csv-summary"
"#;

fn main() -> relarb::Result<()> {
    let cfg = parse_config_with_overrides(Some(CONFIG), &["epsilon=1.8".to_string()])?;
    let stdout = std::io::stdout();
    execute(Subcommand::Simulate, &cfg, &mut stdout.lock())
}
