//! Writes a deterministic synthetic shape model.
//!
//! ```text
//! cargo run -p nns-core --example fixture_model -- out.json [vertices] [components] [seed]
//! ```

use nns_core::ShapeModel;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(path) = args.first() else {
        eprintln!("usage: fixture_model OUT.json [VERTICES] [COMPONENTS] [SEED]");
        std::process::exit(2);
    };
    let num = |i: usize, default: u64| args.get(i).map_or(default, |s| s.parse().expect("integer argument"));
    let model = ShapeModel::fixture(num(1, 100) as usize, num(2, 5) as usize, num(3, 0)).unwrap_or_else(|e| {
        eprintln!("fixture_model: {e}");
        std::process::exit(1);
    });
    if let Err(e) = model.save(path) {
        eprintln!("fixture_model: {e}");
        std::process::exit(1);
    }
}
