//! Generate a source task and its shifted target, store both and read them back.
//!
//!     cargo run --example synthetic_data -- [dir]

use std::path::PathBuf;

use fedsq::{generate, Dataset, Generator, SyntheticSpec};

fn main() -> fedsq::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let source = SyntheticSpec::blobs(500, 4, vec![6], 0.8, 1);
    let target = SyntheticSpec {
        generator: Generator::ShiftedBlobs { domain_shift: 1.5 },
        seed: 2,
        ..source.clone()
    };

    for (name, spec) in [("source", &source), ("target", &target)] {
        let data = generate(spec)?;
        let path = dir.join(format!("{name}.fsqd"));
        data.store(&path)?;
        let back = Dataset::load(&path)?;
        assert_eq!(back, data);
        println!(
            "{name}: {} samples of shape {:?}, class counts {:?} -> {}",
            data.len(),
            data.input_shape(),
            data.class_histogram(),
            path.display()
        );
    }
    Ok(())
}
