//! Writes a few sim and pseudo-real renders as PGM files.
//!
//! cargo run -p augsearch --example render_preview -- <out-dir>

use augsearch::depth::export_pgm;
use augsearch::scene::{observe, render_frame, sample_reach_scene};
use augsearch::{Domain, Rng};
use std::path::PathBuf;

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "preview".into()));
    std::fs::create_dir_all(&dir)?;
    let mut rng = Rng::new(7);
    for i in 0..4 {
        let scene = sample_reach_scene(&mut rng);
        println!("{i}: {}", scene.describe());
        let frame = render_frame(&scene, 64, 64);
        export_pgm(&frame, &dir.join(format!("sim_{i}.pgm")))?;
        let real = observe(&frame, Domain::PseudoReal, &mut rng);
        export_pgm(&real, &dir.join(format!("real_{i}.pgm")))?;
    }
    Ok(())
}
