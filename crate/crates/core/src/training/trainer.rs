use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{
    decode_optimizer_state, encode_optimizer_state, write_atomic, OptimizerState,
};
use super::config::TrainConfig;
use super::optim::{Adam, AdamHyper, Optimizer, Sgd};
use super::patch::{sample_patch, Sample};
use crate::error::{Error, Result};
use crate::evaluation::evaluate_scaled;
use crate::network::{encode_weights, load_weights_with, PyramidModel};
use crate::tensor::{mse_loss, mse_loss_backward, ConvParams, Tape, Tensor4};

pub const CHECKPOINT_WEIGHTS: &str = "checkpoint.pyrd";
pub const CHECKPOINT_OPTIMIZER: &str = "checkpoint.pyos";
pub const TRAIN_LOG: &str = "train_log.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    /// Mean batch loss over the epoch (in scaled density units).
    pub train_loss: f64,
    pub val_mae: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.train_loss).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,train_loss,val_mae\n");
        for r in &self.records {
            let val = r.val_mae.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", r.epoch, r.lr, r.train_loss, val);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize| Error::Load(format!("training log line {line} is malformed"));
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(i + 1));
            }
            records.push(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad(i + 1))?,
                lr: f[1].parse().map_err(|_| bad(i + 1))?,
                train_loss: f[2].parse().map_err(|_| bad(i + 1))?,
                val_mae: if f[3].is_empty() {
                    None
                } else {
                    Some(f[3].parse().map_err(|_| bad(i + 1))?)
                },
            });
        }
        Ok(TrainLog { records })
    }
}

/// MSE loss and parameter gradients for one batch (`inputs` `(n,1,p,p)`,
/// `targets` `(n,1,p/4,p/4)`). The loss is a mean over every target pixel of
/// the batch, so gradients are batch-averaged.
pub fn compute_gradients(
    model: &PyramidModel,
    inputs: &Tensor4,
    targets: &Tensor4,
) -> Result<(f64, Vec<ConvParams>)> {
    let mut tape = Tape::recording();
    let out = model.forward_on(&mut tape, inputs)?;
    let pred = out.fused.value();
    let loss = mse_loss(pred, targets)?;
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("loss is {loss}")));
    }
    let seed = mse_loss_backward(pred, targets)?;
    let mut grads = model.zero_grads();
    tape.backward(&out.fused, seed, model.params(), &mut grads)?;
    Ok((loss, grads))
}

fn optimizer_for_epoch(
    current: Option<Optimizer>,
    epoch: usize,
    cfg: &TrainConfig,
    params: &[ConvParams],
) -> Optimizer {
    let want_adam = epoch < cfg.adam_warm_epochs;
    match current {
        Some(o) if o.is_adam() == want_adam => o,
        // Switching from Adam keeps the weights and starts SGD with zero velocity.
        _ if want_adam => Optimizer::Adam(Adam::new(params, AdamHyper::default())),
        _ => Optimizer::Sgd(Sgd::new(params, cfg.momentum, cfg.weight_decay)),
    }
}

/// Epoch-by-epoch driver. Patch positions for epoch `e` come from a stream
/// seeded by `(seed, e)`, so a resumed run sees the same crops as an
/// uninterrupted one.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub optimizer: Optimizer,
    /// 0-based index of the next epoch to run.
    pub next_epoch: usize,
    pub log: TrainLog,
}

impl Trainer {
    pub fn new(model: &PyramidModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = optimizer_for_epoch(None, 0, &config, model.params());
        Ok(Trainer {
            config,
            optimizer,
            next_epoch: 0,
            log: TrainLog::default(),
        })
    }

    /// Restore the model, optimizer and log from a checkpoint directory.
    /// `template` supplies the backbone config and scales; its weights are ignored.
    pub fn resume(
        dir: &Path,
        config: TrainConfig,
        template: &PyramidModel,
    ) -> Result<(PyramidModel, Trainer)> {
        config.validate()?;
        let model = load_weights_with(
            dir.join(CHECKPOINT_WEIGHTS),
            template.config(),
            Some(template.scales().to_vec()),
        )?;
        if model.mode() != template.mode() {
            return Err(Error::Load(format!(
                "checkpoint fusion mode {} does not match requested {}",
                model.mode(),
                template.mode()
            )));
        }
        let bytes = fs::read(dir.join(CHECKPOINT_OPTIMIZER))?;
        let OptimizerState {
            optimizer,
            next_epoch,
        } = decode_optimizer_state(&bytes, model.params(), config.momentum, config.weight_decay)?;
        let log_path = dir.join(TRAIN_LOG);
        let mut log = if log_path.exists() {
            TrainLog::from_csv(&fs::read_to_string(log_path)?)?
        } else {
            TrainLog::default()
        };
        log.records.retain(|r| r.epoch <= next_epoch);
        Ok((
            model,
            Trainer {
                config,
                optimizer,
                next_epoch,
                log,
            },
        ))
    }

    pub fn is_finished(&self) -> bool {
        self.next_epoch >= self.config.epochs
    }

    pub fn run_epoch(
        &mut self,
        model: &mut PyramidModel,
        data: &[Sample],
        validation: Option<&[Sample]>,
    ) -> Result<EpochRecord> {
        if data.is_empty() {
            return Err(Error::input("training set is empty"));
        }
        let cfg = &self.config;
        let epoch = self.next_epoch;
        let lr = cfg.lr_at(epoch);
        let optimizer =
            std::mem::replace(&mut self.optimizer, Optimizer::Sgd(Sgd::new(&[], 0.0, 0.0)));
        self.optimizer = optimizer_for_epoch(Some(optimizer), epoch, cfg, model.params());

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..data.len() * cfg.patches_per_image)
            .map(|i| i % data.len())
            .collect();
        order.shuffle(&mut rng);

        let names = model.param_names();
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let mut inputs = Vec::with_capacity(chunk.len());
            let mut targets = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let p = sample_patch(
                    &data[i],
                    cfg.patch_size,
                    cfg.density_scale,
                    cfg.flip,
                    &mut rng,
                )?;
                inputs.push(p.input);
                targets.push(p.target);
            }
            let (loss, grads) = compute_gradients(
                model,
                &Tensor4::stack_batch(&inputs)?,
                &Tensor4::stack_batch(&targets)?,
            )
            .map_err(|e| match e {
                Error::Diverged(m) => Error::Diverged(format!("{m} in epoch {}", epoch + 1)),
                other => other,
            })?;
            self.optimizer
                .step(model.params_mut(), &grads, lr, &names)?;
            total += loss;
            batches += 1;
        }
        let val_mae = match validation {
            Some(v) if !v.is_empty() => Some(evaluate_scaled(model, v, cfg.density_scale)?.mae),
            _ => None,
        };
        let record = EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss: total / batches as f64,
            val_mae,
        };
        self.log.records.push(record.clone());
        self.next_epoch += 1;
        Ok(record)
    }

    /// Weights, optimizer sidecar and log, each written atomically.
    pub fn save_checkpoint(&self, model: &PyramidModel, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join(CHECKPOINT_WEIGHTS), &encode_weights(model))?;
        let state = OptimizerState {
            optimizer: self.optimizer.clone(),
            next_epoch: self.next_epoch,
        };
        write_atomic(
            &dir.join(CHECKPOINT_OPTIMIZER),
            &encode_optimizer_state(&state),
        )?;
        write_atomic(&dir.join(TRAIN_LOG), self.log.to_csv().as_bytes())
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions<'a> {
    pub validation: Option<&'a [Sample]>,
    /// Checkpoint after every epoch (and once before the first).
    pub checkpoint_dir: Option<PathBuf>,
    /// Print one line per epoch to stderr.
    pub verbose: bool,
}

/// Run `config.epochs` epochs from scratch. On divergence the error is
/// returned and the checkpoint from the last completed epoch is left intact.
pub fn train(
    model: &mut PyramidModel,
    data: &[Sample],
    config: &TrainConfig,
    options: &TrainOptions,
) -> Result<TrainLog> {
    let mut trainer = Trainer::new(model, config.clone())?;
    if let Some(dir) = &options.checkpoint_dir {
        trainer.save_checkpoint(model, dir)?;
    }
    continue_training(&mut trainer, model, data, options)?;
    Ok(trainer.log)
}

/// Run the remaining epochs of `trainer`.
pub fn continue_training(
    trainer: &mut Trainer,
    model: &mut PyramidModel,
    data: &[Sample],
    options: &TrainOptions,
) -> Result<()> {
    if data.is_empty() {
        return Err(Error::input("training set is empty"));
    }
    while !trainer.is_finished() {
        let rec = trainer.run_epoch(model, data, options.validation)?;
        if options.verbose {
            let val = rec
                .val_mae
                .map(|v| format!(" val_mae {v:.4}"))
                .unwrap_or_default();
            eprintln!(
                "epoch {} lr {:.3e} loss {:.6}{val}",
                rec.epoch, rec.lr, rec.train_loss
            );
        }
        if let Some(dir) = &options.checkpoint_dir {
            trainer.save_checkpoint(model, dir)?;
        }
    }
    Ok(())
}
