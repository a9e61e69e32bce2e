"""Training loop: Adam with cosine annealing, proposal warm-up, early-stopping selection."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import adam_step, cosine_lr
from .checkpoint import Checkpoint
from .errors import ConfigurationError, EvaluationError, TrainingDiverged
from .model import AEM, estimate_log_prob, training_objective

log = logging.getLogger(__name__)

LOG_HEADER = "step,lr,train_loss,val_log_p_hat,val_log_q"


@dataclass
class TrainResult:
    model: AEM
    checkpoint: Checkpoint
    log_rows: list = field(default_factory=list)

    def log_csv(self):
        return "\n".join([LOG_HEADER] + [format_log_row(r) for r in self.log_rows]) + "\n"


def format_log_row(row):
    step, *rest = row
    return ",".join([str(step)] + [repr(float(v)) for v in rest])


def _validate(model, x_val, n_samples, seed):
    est = estimate_log_prob(model, x_val, n_samples, np.random.default_rng(seed))
    return float(np.mean(est.log_p)), float(np.mean(est.log_q))


def train(model_config, train_config, x_train, x_val, log_path=None, callback=None):
    """Fit an AEM and return the best-validation model.

    Validation runs every ``val_interval`` steps and at the end. The selection
    metric is mean validation ``log q`` during warm-up and mean ``log p_hat``
    afterwards; the best parameters seen under the current metric are kept.
    ``callback(step, row)`` is called after each validation.
    """
    model_config.validate()
    train_config.validate()
    if x_train.shape[1] != model_config.dim:
        raise ConfigurationError(
            f"config dim {model_config.dim} does not match data dimension {x_train.shape[1]}"
        )
    cfg = train_config
    init_seq, data_seq, step_seq, val_seq = np.random.SeedSequence(cfg.seed).spawn(4)
    model = AEM(model_config, rng=np.random.default_rng(init_seq))
    data_rng = np.random.default_rng(data_seq)
    step_rng = np.random.default_rng(step_seq)
    val_seed = int(val_seq.generate_state(1)[0])
    x_val = x_val[: cfg.val_rows]
    n = x_train.shape[0]
    batch = min(cfg.batch_size, n)

    best = -math.inf
    best_params = model.store.snapshot()
    best_step = 0
    stale = 0
    rows = []
    order = data_rng.permutation(n)
    cursor = 0
    running, count = 0.0, 0
    fh = open(log_path, "w") if log_path else None
    if fh:
        fh.write(LOG_HEADER + "\n")

    def checkpoint(step):
        return Checkpoint(model_config, train_config, best_params, best, step,
                          step_rng.bit_generator.state)

    try:
        for step in range(cfg.total_steps):
            if cursor + batch > n:
                order = data_rng.permutation(n)
                cursor = 0
            xb = x_train[order[cursor:cursor + batch]]
            cursor += batch
            warm = step < cfg.warm_up_steps
            if step == cfg.warm_up_steps and step > 0:
                # the selection metric changes from log q to log p_hat
                best, stale = -math.inf, 0
            lr = cosine_lr(step, cfg.total_steps, cfg.learning_rate)
            try:
                res = training_objective(model, xb, cfg.n_importance_samples, step_rng, warm_up=warm)
                res.tape.backward(res.loss)
                adam_step(model.store, lr)
            except EvaluationError as exc:
                model.store.zero_grad()
                raise TrainingDiverged(f"step {step}: {exc}", checkpoint(step)) from exc
            running += float(res.loss.value)
            count += 1

            done = step + 1 == cfg.total_steps
            if (step + 1) % cfg.val_interval == 0 or done:
                val_p, val_q = _validate(model, x_val, cfg.n_importance_samples, val_seed)
                metric = val_q if step + 1 <= cfg.warm_up_steps else val_p
                if metric > best:
                    best, best_params, best_step, stale = metric, model.store.snapshot(), step + 1, 0
                else:
                    stale += 1
                row = (step + 1, lr, running / count, val_p, val_q)
                rows.append(row)
                running, count = 0.0, 0
                if fh:
                    fh.write(format_log_row(row) + "\n")
                    fh.flush()
                log.info("step %d lr %.2e loss %.4f val log p %.4f val log q %.4f",
                         *row)
                if callback:
                    callback(step + 1, row)
                if (cfg.early_stopping_patience and step + 1 > cfg.warm_up_steps
                        and stale >= cfg.early_stopping_patience):
                    log.info("early stopping at step %d", step + 1)
                    break
    finally:
        if fh:
            fh.close()

    model.store.restore(best_params)
    ckpt = Checkpoint(model_config, train_config, model.store.snapshot(), best, best_step,
                      step_rng.bit_generator.state)
    return TrainResult(model=model, checkpoint=ckpt, log_rows=rows)
