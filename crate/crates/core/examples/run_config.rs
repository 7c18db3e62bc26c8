//! The flat TOML run config the CLI reads and echoes, with defaults and an
//! override file.
//!
//! cargo run --example run_config -- [config.toml]

use sketchclip::cli::RunConfig;

const OVERRIDES: &str = r#"
adapter = "toy"
seen_categories = ["circle", "cross"]
unseen_categories = ["zigzag"]
shots = 5
prompt_depth = 2
learning_rate = 0.01
beta2 = 0.5
mixup = false
"#;

fn main() -> sketchclip::Result<()> {
    println!("# defaults\n{}", RunConfig::default().to_toml()?);
    let cfg = match std::env::args().nth(1) {
        Some(path) => RunConfig::load(path.as_ref())?,
        None => RunConfig::parse(OVERRIDES)?,
    };
    cfg.train.validate()?;
    println!("# effective\n{}", cfg.to_toml()?);
    match RunConfig::parse("lerning_rate = 0.1") {
        Err(e) => println!("# a misspelled key is rejected\n{e}"),
        Ok(_) => unreachable!("unknown keys are rejected"),
    }
    Ok(())
}
