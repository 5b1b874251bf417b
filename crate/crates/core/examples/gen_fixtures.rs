//! Regenerates `fixtures/raw` and `fixtures/store`.
//!
//! cargo run -p beads-core --example gen_fixtures

#[path = "../tests/support/fixture_gen.rs"]
mod fixture_gen;

fn main() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    for sub in ["raw", "store"] {
        let dir = root.join(sub);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).expect("clear old fixtures");
        }
    }
    fixture_gen::write_fixtures(&root);
    println!("fixtures written to {}", root.display());
}
