import logging
import os
from dataclasses import asdict, dataclass

import numpy as np
import torch
from tensorboardX import SummaryWriter

from glsed.algorithms.algorithm.sed_model import save_checkpoint
from glsed.algorithms.utils.cnn import EncoderConfig
from glsed.utils.util import rng_state, set_rng_state

logger = logging.getLogger(__name__)


@dataclass
class TrainingState:
    """Progress of one training run; a stays 0 while epoch <= start_epoch."""
    epoch: int = 0
    a: float = 0.0
    best_f1: float = float("-inf")
    best_epoch: int = 0
    epochs_since_improvement: int = 0


class Runner(object):
    """
    Base class for training SED models.
    :param config: (dict) Config dictionary containing parameters for training.
    """

    def __init__(self, config):

        self.all_args = config['all_args']
        self.device = config['device']
        self.train_set = config['train_set']
        self.valid_set = config['valid_set']
        self.vocabulary = config['vocabulary']
        self.masks = config['masks']
        self.window_plan = config['window_plan']
        self.feature_fingerprint = config['feature_fingerprint']

        # parameters
        self.experiment_name = self.all_args.experiment_name
        self.mode = self.all_args.mode
        self.gamma = self.all_args.gamma
        self.start_epoch = self.all_args.start_epoch
        self.batch_size = self.all_args.batch_size
        self.max_epochs = self.all_args.max_epochs
        self.patience = self.all_args.patience
        self.alpha = self.all_args.alpha
        self.use_tqdm = not self.all_args.quiet

        # dir
        self.run_dir = config["run_dir"]
        self.log_dir = str(self.run_dir / 'logs')
        if not os.path.exists(self.log_dir):
            os.makedirs(self.log_dir)
        self.writer = SummaryWriter(self.log_dir)
        self.save_dir = str(self.run_dir / 'models')
        if not os.path.exists(self.save_dir):
            os.makedirs(self.save_dir)

        from glsed.algorithms.algorithm.guided_learning import Augmenter
        from glsed.algorithms.algorithm.guided_learning import GuidedLearning as TrainAlgo
        from glsed.algorithms.algorithm.sed_policy import SEDPolicy as Policy

        ps_config = EncoderConfig.ps(channels=tuple(self.all_args.ps_channels), n_frames=self.all_args.target_frames,
                                     n_mels=self.all_args.n_mels, use_orthogonal=self.all_args.use_orthogonal)
        pt_config = EncoderConfig.pt(channels=tuple(self.all_args.pt_channels), n_frames=self.all_args.target_frames,
                                     n_mels=self.all_args.n_mels, use_orthogonal=self.all_args.use_orthogonal)

        # models
        self.ps_policy = Policy(self.all_args, ps_config, self.masks, device=self.device)
        self.pt_policy = None
        if self.mode == "gl":
            self.pt_policy = Policy(self.all_args, pt_config, self.masks, device=self.device)

        # algorithm
        self.augmenter = Augmenter(self.all_args.max_shift, self.all_args.noise_std, seed=self.all_args.seed,
                                   enabled=not self.all_args.no_augment)
        self.trainer = TrainAlgo(self.all_args, self.ps_policy, self.pt_policy, self.augmenter, device=self.device)

        self.rng = np.random.default_rng(self.all_args.seed)
        self.state = TrainingState()
        self.history = []

    def run(self):
        """Train until early stopping or max_epochs, evaluating after every epoch."""
        raise NotImplementedError

    def eval(self):
        """Score the PS-model on the validation set."""
        raise NotImplementedError

    def train(self, a):
        """
        One epoch of minibatch updates.
        :param a: (float) unsupervised weight of the PT-model.
        """
        self.trainer.prep_training()
        plan = self.train_set.plan(self.batch_size, self.rng, use_unlabeled=self.pt_policy is not None)
        batches = self.train_set.batches(plan)
        if self.use_tqdm:
            from tqdm import tqdm
            batches = tqdm(batches, total=len(plan), desc=f"epoch {self.state.epoch + 1}", leave=False)
        return self.trainer.train(batches, a)

    def save(self, name):
        """Save the PS-model as a self-describing checkpoint."""
        path = os.path.join(self.save_dir, name)
        save_checkpoint(path, self.ps_policy.model, self.vocabulary.fingerprint, self.feature_fingerprint,
                        extra={"epoch": self.state.epoch, "mode": self.mode, "classes": self.vocabulary.classes})
        return path

    def save_latest(self):
        """Everything needed to resume: both models, optimizers, training state, history and RNG states."""
        payload = {
            "ps": self.ps_policy.state_dict(),
            "pt": self.pt_policy.state_dict() if self.pt_policy is not None else None,
            "state": asdict(self.state),
            "history": self.history,
            "rng": self.rng.bit_generator.state,
            "augmenter": self.augmenter.state_dict(),
            "global_rng": rng_state(),
        }
        torch.save(payload, os.path.join(self.save_dir, "latest.pt"))

    def restore(self):
        """Restore from latest.pt; returns False when there is nothing to resume."""
        path = os.path.join(self.save_dir, "latest.pt")
        if not os.path.exists(path):
            return False
        payload = torch.load(path, map_location=self.device, weights_only=False)
        self.ps_policy.load_state_dict(payload["ps"])
        if self.pt_policy is not None:
            if payload["pt"] is None:
                raise ValueError(f"{path} holds no PT-model; it was written by an atp_df run")
            self.pt_policy.load_state_dict(payload["pt"])
        self.state = TrainingState(**payload["state"])
        self.history = list(payload["history"])
        self.rng.bit_generator.state = payload["rng"]
        self.augmenter.load_state_dict(payload["augmenter"])
        set_rng_state(payload["global_rng"])
        logger.info("resumed %s at epoch %d", self.run_dir, self.state.epoch)
        return True

    def log_train(self, train_infos, epoch):
        """
        Log training info.
        :param train_infos: (dict) information about training update.
        :param epoch: (int) current epoch.
        """
        for k, v in train_infos.items():
            self.writer.add_scalars(k, {k: v}, epoch)

    def close(self):
        self.writer.export_scalars_to_json(str(self.log_dir + "/summary.json"))
        self.writer.close()
