import json
import logging
import time

import pandas as pd
import torch

from glsed.algorithms.algorithm.guided_learning import unsupervised_weight
from glsed.algorithms.algorithm.sed_model import clip_prediction
from glsed.inference.postprocess import decode_events
from glsed.inference.predict import predict
from glsed.metrics.sed_metrics import clip_f1, event_based_f1, segment_based_f1
from glsed.runner.base_runner import Runner
from glsed.utils.plotting import plot_training_curves

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "lr", "a", "loss_ps", "loss_pt", "clip_f1", "event_f1", "segment_f1")


class SEDRunner(Runner):
    """Runner class for ATP-DF and guided learning training runs. See parent class for details."""

    def __init__(self, config):
        super(SEDRunner, self).__init__(config)

    def run(self):
        start = time.time()
        first_epoch = self.state.epoch + 1

        for epoch in range(first_epoch, self.max_epochs + 1):
            if self.state.epochs_since_improvement >= self.patience:
                break

            lr = self.ps_policy.lr_decay(epoch)
            a = 0.0
            if self.pt_policy is not None:
                self.pt_policy.lr_decay(epoch)
                a = unsupervised_weight(epoch, self.start_epoch, self.gamma)

            train_infos = self.train(a)
            scores = self.eval()

            row = {"epoch": epoch, "lr": lr, "a": a, "loss_ps": train_infos["loss_ps"],
                   "loss_pt": train_infos["loss_pt"], **scores}
            self.history.append(row)
            self.state.epoch = epoch
            self.state.a = a

            if scores["clip_f1"] > self.state.best_f1:
                self.state.best_f1 = scores["clip_f1"]
                self.state.best_epoch = epoch
                self.state.epochs_since_improvement = 0
                self.save("best.pt")
                self.save("epoch{:03d}_f1_{:.4f}.pt".format(epoch, scores["clip_f1"]))
            else:
                self.state.epochs_since_improvement += 1

            self.write_history()
            self.save_latest()

            end = time.time()
            print(
                "\n Exp {} mode {} epoch {}/{}, lr {:.6f}, a {:.4f}, loss ps {:.4f} pt {:.4f}, "
                "clip F1 {:.4f}, event F1 {:.4f}, segment F1 {:.4f}, {:.1f}s.\n".format(
                    self.experiment_name,
                    self.mode,
                    epoch,
                    self.max_epochs,
                    lr,
                    a,
                    train_infos["loss_ps"],
                    train_infos["loss_pt"],
                    scores["clip_f1"],
                    scores["event_f1"],
                    scores["segment_f1"],
                    end - start,
                )
            )
            self.log_train({**train_infos, **scores, "lr": lr, "a": a}, epoch)

        if self.state.epochs_since_improvement >= self.patience:
            logger.info("early stop after epoch %d: no better clip-level F1 for %d epochs",
                        self.state.epoch, self.patience)
        return self.finish()

    @torch.no_grad()
    def eval(self):
        """
        Clip-level, event-based and segment-based macro F1 of the PS-model on the validation set.

        :return scores: (dict) clip_f1, event_f1 and segment_f1.
        """
        self.trainer.prep_rollout()
        classes = self.vocabulary.classes
        probs = predict(self.ps_policy.model, self.valid_set.features, self.valid_set.clip_ids,
                        batch_size=self.batch_size)
        clip = clip_f1(self.valid_set.tags, clip_prediction(probs.clip_probs, self.alpha), classes)
        events = decode_events(probs, self.window_plan, self.alpha)
        event = event_based_f1(self.valid_set.refs, events, classes, durations=self.valid_set.durations)
        segment = segment_based_f1(self.valid_set.refs, events, classes, durations=self.valid_set.durations)
        return {"clip_f1": clip.macro_f1, "event_f1": event.macro_f1, "segment_f1": segment.macro_f1}

    def history_frame(self):
        return pd.DataFrame(self.history, columns=list(HISTORY_COLUMNS))

    def write_history(self):
        self.history_frame().to_csv(self.run_dir / "history.tsv", sep="\t", index=False, float_format="%.6f")

    def finish(self):
        """Write metrics.json and curves.png; returns the validation scores of the best epoch."""
        history = self.history_frame()
        best = history[history["epoch"] == self.state.best_epoch].iloc[0].to_dict() if len(history) else {}
        metrics = {
            "experiment": self.experiment_name,
            "mode": self.mode,
            "seed": self.all_args.seed,
            "epochs_run": int(self.state.epoch),
            "best_epoch": int(self.state.best_epoch),
            "clip_f1": float(best.get("clip_f1", 0.0)),
            "event_f1": float(best.get("event_f1", 0.0)),
            "segment_f1": float(best.get("segment_f1", 0.0)),
        }
        with open(self.run_dir / "metrics.json", "w") as f:
            json.dump(metrics, f, indent=2)
        if len(history):
            plot_training_curves(history, self.run_dir / "curves.png",
                                 title=f"{self.experiment_name} {self.mode} seed {self.all_args.seed}")
        self.close()
        return metrics
