//! Writes the bundled synthetic dataset to stdout:
//! `cargo run -p cfrec-core --example generate_synthetic > crates/core/data/synthetic_500x200.csv`

use std::io::{self, BufWriter, Write};

use cfrec_core::io::RATINGS_HEADER;
use cfrec_core::synthetic::{generate, SyntheticConfig};

fn main() -> io::Result<()> {
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(out, "{RATINGS_HEADER}")?;
    for t in generate(&SyntheticConfig::default()) {
        writeln!(out, "{},{},{}", t.user, t.item, t.rating)?;
    }
    out.flush()
}
