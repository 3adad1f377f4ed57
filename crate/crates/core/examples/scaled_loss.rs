//! Cross-entropy divided by ln(n) puts tasks with different label counts on
//! the same scale: a uniform guess scores 1.0 whatever n is.

use prefinetune::kernel::cross_entropy;
use prefinetune::training::scaled_loss;

fn main() -> prefinetune::Result<()> {
    println!("{:>3}  {:>10}  {:>10}", "n", "raw CE", "scaled");
    for n in [2, 4, 5, 9] {
        let uniform = vec![0.0; n];
        let raw = cross_entropy(&uniform, 0)?;
        println!("{n:>3}  {raw:>10.4}  {:>10.4}", scaled_loss(raw, n)?);
    }
    let confident = [3.0, 0.0, 0.0, 0.0];
    let raw = cross_entropy(&confident, 0)?;
    println!("confident 4-way guess: raw {raw:.4}, scaled {:.4}", scaled_loss(raw, 4)?);
    Ok(())
}
