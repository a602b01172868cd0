//! Domain loss as a function of training steps and mixture share.
//!
//! cargo run --example data_mixing_law

use lrsweep::surrogate::{ge_loss, GeParams};

pub fn main() -> lrsweep::Result<()> {
    let p = GeParams { a0: 1.0, a1: 0.5, a3: 2.0, alpha: 0.5, beta: 0.1 };
    let steps = [1e2, 1e3, 1e4, 1e5];
    print!("{:>8}", "r");
    for s in steps {
        print!("{s:>10.0e}");
    }
    println!();
    for r in [1.0, 0.5, 0.25, 0.125] {
        print!("{r:>8}");
        for s in steps {
            print!("{:>10.4}", ge_loss(s, r, &p));
        }
        println!();
    }
    Ok(())
}
