import torch
import torch.nn as nn
import torch.nn.functional as F

from glsed.algorithms.utils.util import check
from glsed.utils.util import get_grad_norm

PROB_EPS = 1e-7


def unsupervised_weight(epoch, start_epoch, gamma):
    """
    Weight a of the PT-model's loss on PS pseudo-labels.
    :param epoch: (int) current epoch, 1-based.
    :param start_epoch: (int) last epoch with a = 0.
    :param gamma: (float) decay constant in (0, 1]; gamma = 1 keeps a at 0 forever.
    """
    assert epoch >= 1, "epochs are 1-based"
    assert 0 < gamma <= 1, "gamma must lie in (0, 1]"
    if epoch > start_epoch:
        return 1.0 - gamma ** (epoch - start_epoch)
    return 0.0


def clip_bce(targets, probs):
    """
    J(y, p): binary cross-entropy per class, averaged over classes.
    :param targets: (torch.Tensor) B x C targets in {0, 1}.
    :param probs: (torch.Tensor) B x C predicted clip-level probabilities.

    :return loss: (torch.Tensor) B per-clip losses.
    """
    probs = probs.clamp(PROB_EPS, 1.0 - PROB_EPS)
    return F.binary_cross_entropy(probs, targets, reduction="none").mean(dim=-1)


def time_shift(features, shifts):
    """
    Shift each clip along time by shifts[b] frames, repeating the edge frames.
    :param features: (torch.Tensor) B x T x F.
    :param shifts: (torch.Tensor) B integer shifts; positive moves content later.
    """
    t = features.shape[1]
    index = (torch.arange(t, device=features.device)[None, :] - shifts[:, None]).clamp(0, t - 1)
    return torch.gather(features, 1, index[:, :, None].expand(-1, -1, features.shape[2]))


class Augmenter:
    """
    Stochastic input augmentation g(x): random time shift plus Gaussian feature noise.
    :param max_shift: (int) shifts are drawn uniformly from [-max_shift, max_shift]; 0 disables.
    :param noise_std: (float) standard deviation of the additive noise; 0 disables.
    :param seed: (int) seed of the private generator.
    """

    def __init__(self, max_shift=8, noise_std=0.1, seed=0, enabled=True):
        self.max_shift = max_shift if enabled else 0
        self.noise_std = noise_std if enabled else 0.0
        self.generator = torch.Generator().manual_seed(seed)

    def __call__(self, features):
        if self.max_shift > 0:
            shifts = torch.randint(-self.max_shift, self.max_shift + 1, (features.shape[0],),
                                   generator=self.generator)
            features = time_shift(features, shifts.to(features.device))
        if self.noise_std > 0:
            noise = torch.randn(features.shape, generator=self.generator) * self.noise_std
            features = features + noise.to(features.device)
        return features

    def state_dict(self):
        return {"generator": self.generator.get_state()}

    def load_state_dict(self, state):
        self.generator.set_state(state["generator"])


class GuidedLearning:
    """
    Trainer class for the PS-model alone (ATP-DF) or PS/PT co-training (guided learning).
    :param args: (argparse.Namespace) arguments containing training settings.
    :param ps_policy: (SEDPolicy) the fine-time student.
    :param pt_policy: (SEDPolicy) the coarse-time teacher, None for ATP-DF.
    :param augmenter: (Augmenter) g(x) applied to the PT-model input.
    :param device: (torch.device) specifies the device to run on (cpu/gpu).
    """

    def __init__(self, args, ps_policy, pt_policy=None, augmenter=None, device=torch.device("cpu")):
        self.device = device
        self.tpdv = dict(dtype=torch.float32, device=device)
        self.ps_policy = ps_policy
        self.pt_policy = pt_policy
        self.augmenter = augmenter if augmenter is not None else Augmenter(enabled=False)

        self.alpha = args.alpha
        self.max_grad_norm = args.max_grad_norm
        self._use_max_grad_norm = args.use_max_grad_norm

    def _clip_and_norm(self, model):
        if self._use_max_grad_norm:
            return float(nn.utils.clip_grad_norm_(model.parameters(), self.max_grad_norm))
        return get_grad_norm(model.parameters())

    def supervised_step(self, features, labels):
        """
        One update of the PS-model on a fully labeled batch.
        :param features: (np.ndarray) B x T x F inputs.
        :param labels: (np.ndarray) B x C weak labels.

        :return info: (dict) loss and gradient norm.
        """
        x = check(features, **self.tpdv)
        y = check(labels, **self.tpdv)
        if x.shape[0] == 0:
            raise ValueError("empty batch")

        s = self.ps_policy.get_probs(x).clip_probs
        loss = clip_bce(y, s).mean()

        self.ps_policy.optimizer.zero_grad()
        loss.backward()
        grad_norm = self._clip_and_norm(self.ps_policy.model)
        self.ps_policy.optimizer.step()

        return {"loss_ps": loss.item(), "loss_pt": 0.0, "ps_grad_norm": grad_norm, "pt_grad_norm": 0.0}

    def gl_losses(self, features, labels, labeled, a):
        """
        Both branch losses of one guided-learning minibatch, normalised by |B|.
        :param features: (np.ndarray / torch.Tensor) B x T x F inputs.
        :param labels: (np.ndarray / torch.Tensor) B x C labels; rows of unlabeled clips are ignored.
        :param labeled: (np.ndarray / torch.Tensor) B booleans, True for members of L.
        :param a: (float) weight of the PT-model's loss on PS pseudo-labels.

        :return loss_ps: (torch.Tensor) PS-model loss.
        :return loss_pt: (torch.Tensor) PT-model loss.
        """
        x = check(features, **self.tpdv)
        y = check(labels, **self.tpdv)
        in_l = check(labeled, **self.tpdv)
        in_u = 1.0 - in_l
        batch_size = x.shape[0]
        if batch_size == 0:
            raise ValueError("empty batch")

        s = self.ps_policy.get_probs(x).clip_probs
        t = self.pt_policy.get_probs(self.augmenter(x)).clip_probs
        # hard 0/1 pseudo-labels, constants for the other model
        s_tilde = (s >= self.alpha).float().detach()
        t_tilde = (t >= self.alpha).float().detach()

        loss_ps = (in_l * clip_bce(y, s) + in_u * clip_bce(t_tilde, s)).sum() / batch_size
        loss_pt = (in_l * clip_bce(y, t) + a * in_u * clip_bce(s_tilde, t)).sum() / batch_size
        return loss_ps, loss_pt

    def gl_step(self, features, labels, labeled, a):
        """
        One guided-learning update of both models.

        :return info: (dict) losses and gradient norms.
        """
        loss_ps, loss_pt = self.gl_losses(features, labels, labeled, a)

        self.ps_policy.optimizer.zero_grad()
        self.pt_policy.optimizer.zero_grad()
        (loss_ps + loss_pt).backward()
        ps_grad_norm = self._clip_and_norm(self.ps_policy.model)
        pt_grad_norm = self._clip_and_norm(self.pt_policy.model)
        self.ps_policy.optimizer.step()
        self.pt_policy.optimizer.step()

        return {"loss_ps": loss_ps.item(), "loss_pt": loss_pt.item(),
                "ps_grad_norm": ps_grad_norm, "pt_grad_norm": pt_grad_norm}

    def train(self, batches, a=0.0):
        """
        Run one epoch of updates.
        :param batches: (Iterable) (features, labels, labeled) minibatches.
        :param a: (float) unsupervised weight for this epoch (ignored without a PT-model).

        :return train_info: (dict) per-update averages of the step infos.
        """
        train_info = {"loss_ps": 0.0, "loss_pt": 0.0, "ps_grad_norm": 0.0, "pt_grad_norm": 0.0}
        num_updates = 0
        for features, labels, labeled in batches:
            if self.pt_policy is None:
                info = self.supervised_step(features, labels)
            else:
                info = self.gl_step(features, labels, labeled, a)
            for k, v in info.items():
                train_info[k] += v
            num_updates += 1

        for k in train_info.keys():
            train_info[k] /= max(num_updates, 1)
        return train_info

    def prep_training(self):
        self.ps_policy.model.train()
        if self.pt_policy is not None:
            self.pt_policy.model.train()

    def prep_rollout(self):
        self.ps_policy.model.eval()
        if self.pt_policy is not None:
            self.pt_policy.model.eval()
