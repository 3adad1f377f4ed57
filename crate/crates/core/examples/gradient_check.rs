//! Compares backprop against central finite differences on a random model.

use prefinetune::kernel::{grad_check, GradSample, ModelState, TaskId};

fn main() -> prefinetune::Result<()> {
    let mut model = ModelState::init(8, 6, 42);
    model.attach_head(TaskId::new("four-way"), 4, 1)?;
    model.attach_head(TaskId::new("nine-way"), 9, 2)?;
    let samples: Vec<GradSample> = (0..6)
        .map(|i| GradSample {
            task: TaskId::new(if i % 2 == 0 { "four-way" } else { "nine-way" }),
            x: (0..8).map(|j| ((i * 8 + j) as f64 * 0.37).sin()).collect(),
            label: i % 4,
        })
        .collect();
    let report = grad_check(&model, &samples)?;
    println!("{} parameters, {} samples", model.num_params(), samples.len());
    println!("max relative error {:.3e}", report.max_relative_error);
    Ok(())
}
