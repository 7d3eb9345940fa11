use super::{validate, Activation, ModelSpec, Step, WeightStore};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::nn::{conv3x3_with, maxpool2x2_with, relu_in_place, Tensor};

pub fn forward(spec: &ModelSpec, weights: &WeightStore, input: &Tensor) -> Result<Tensor> {
    forward_with(spec, weights, input, Exec::Sequential)
}

/// Runs every sublayer and pool of `spec` in order.
///
/// The result does not depend on `exec`; parallel mode only splits each layer's output
/// channels across threads.
pub fn forward_with(
    spec: &ModelSpec,
    weights: &WeightStore,
    input: &Tensor,
    exec: Exec,
) -> Result<Tensor> {
    let report = validate(spec);
    if !report.ok() {
        let msgs: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
        return Err(Error::InvalidSpec(msgs.join("; ")));
    }
    if input.shape() != spec.input_shape() {
        return Err(Error::Shape(format!(
            "model expects a {} input, got {}",
            spec.input_shape(),
            input.shape()
        )));
    }
    execute(spec, weights, input, exec)
}

/// Runs the layer list on an input of any spatial size, without the chip-constraint checks
/// of [`forward_with`]. Weights must still match the spec, and every step must be shape-valid
/// for the given input.
pub fn execute(
    spec: &ModelSpec,
    weights: &WeightStore,
    input: &Tensor,
    exec: Exec,
) -> Result<Tensor> {
    weights.check(spec)?;
    if input.channels() != spec.input_channels {
        return Err(Error::Shape(format!(
            "model expects {} input channels, got {}",
            spec.input_channels,
            input.channels()
        )));
    }
    let mut kernels = weights.kernels().iter();
    let mut x: Option<Tensor> = None;
    for step in spec.steps() {
        let cur = x.as_ref().unwrap_or(input);
        let next = match step {
            Step::Conv { layer, .. } => {
                let k = kernels.next().expect("kernel count checked");
                let y = conv3x3_with(cur, k, layer.padding, exec)?;
                match layer.activation {
                    Activation::Relu => relu_in_place(y),
                    Activation::None => y,
                }
            }
            Step::Pool { .. } => maxpool2x2_with(cur, exec)?,
        };
        x = Some(next);
    }
    x.ok_or_else(|| Error::InvalidSpec("model has no layers".into()))
}
