use super::Tensor4;
use crate::error::{Error, Result};

fn check_stack(maps: &[Tensor4]) -> Result<()> {
    let first = maps
        .first()
        .ok_or_else(|| Error::config("softmax over an empty scale list"))?;
    if let Some(bad) = maps.iter().find(|m| m.dims() != first.dims()) {
        return Err(Error::config(format!(
            "across-scale softmax needs equal dims, got {:?} and {:?}",
            first.dims(),
            bad.dims()
        )));
    }
    Ok(())
}

/// Per-pixel softmax over a stack of equally shaped maps (one per scale).
pub fn softmax_across_scales(maps: &[Tensor4]) -> Result<Vec<Tensor4>> {
    check_stack(maps)?;
    let len = maps[0].len();
    let mut out: Vec<Tensor4> = maps.iter().map(|m| Tensor4::zeros(m.dims())).collect();
    let mut exps = vec![0.0f64; maps.len()];
    for i in 0..len {
        let max = maps
            .iter()
            .map(|m| m.data()[i])
            .fold(f32::NEG_INFINITY, f32::max);
        let mut total = 0.0f64;
        for (e, m) in exps.iter_mut().zip(maps) {
            *e = ((m.data()[i] - max) as f64).exp();
            total += *e;
        }
        for (o, e) in out.iter_mut().zip(&exps) {
            o.data_mut()[i] = (e / total) as f32;
        }
    }
    Ok(out)
}

/// Softmax Jacobian applied per pixel: `gᵢ' = yᵢ (gᵢ − Σⱼ yⱼ gⱼ)`.
pub fn softmax_across_scales_backward(
    grads: &[Tensor4],
    outputs: &[Tensor4],
) -> Result<Vec<Tensor4>> {
    check_stack(outputs)?;
    check_stack(grads)?;
    if grads.len() != outputs.len() || grads[0].dims() != outputs[0].dims() {
        return Err(Error::shape(
            "softmax backward: gradient stack does not match outputs",
        ));
    }
    let len = outputs[0].len();
    let mut out: Vec<Tensor4> = outputs.iter().map(|m| Tensor4::zeros(m.dims())).collect();
    for i in 0..len {
        let dot: f64 = grads
            .iter()
            .zip(outputs)
            .map(|(g, y)| g.data()[i] as f64 * y.data()[i] as f64)
            .sum();
        for ((o, g), y) in out.iter_mut().zip(grads).zip(outputs) {
            let yv = y.data()[i] as f64;
            o.data_mut()[i] = (yv * (g.data()[i] as f64 - dot)) as f32;
        }
    }
    Ok(out)
}
