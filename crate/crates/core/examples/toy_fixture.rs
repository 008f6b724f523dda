//! Writes the bundled toy corpus: `cargo run --example toy_fixture -- fixtures/toy`.

use std::path::PathBuf;

use mixsearch::fixture::{toy_fixture, TOY_SEED};

fn main() -> mixsearch::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| "fixtures/toy".into());
    let files = toy_fixture(TOY_SEED)?.write_dir(&dir)?;
    println!("wrote {}", files.embeddings.parent().unwrap_or(&dir).display());
    Ok(())
}
