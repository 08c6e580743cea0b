//! A Latin-hypercube design and its one-sample-per-stratum property.
//!
//! ```bash
//! cargo run --example lhs_design
//! ```

use csb::sampling::latin_hypercube;
use csb::Orthotope;

fn main() -> csb::Result<()> {
    let bx = Orthotope::from_bounds(&[(0.0, 1.0), (10.0, 20.0)])?;
    let n = 8;
    let design = latin_hypercube(&bx, n, 1)?;
    for row in design.iter_rows() {
        println!("{:.4} {:.4}", row[0], row[1]);
    }
    for (j, iv) in bx.intervals().iter().enumerate() {
        let mut strata: Vec<usize> = design
            .column(j)
            .iter()
            .map(|v| ((v - iv.lower) / iv.width() * n as f64) as usize)
            .collect();
        strata.sort();
        println!("factor {j} strata: {strata:?}");
    }
    Ok(())
}
