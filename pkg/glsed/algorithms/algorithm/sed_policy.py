import torch

from glsed.algorithms.algorithm.sed_model import SEDModel
from glsed.utils.util import update_step_schedule


class SEDPolicy:
    """
    Wraps one SED model with its own Adam optimizer and learning-rate schedule.

    :param args: (argparse.Namespace) arguments containing optimizer settings.
    :param config: (EncoderConfig) encoder layout of the wrapped model.
    :param masks: (np.ndarray) C x d DF masks.
    :param device: (torch.device) specifies the device to run on (cpu/gpu).
    """

    def __init__(self, args, config, masks, device=torch.device("cpu")):
        self.device = device
        self.lr = args.lr
        self.lr_decay_rate = args.lr_decay
        self.lr_decay_epochs = args.lr_decay_epochs
        self.opti_eps = args.opti_eps
        self.weight_decay = args.weight_decay

        self.model = SEDModel(config, masks, device=self.device)
        self.optimizer = torch.optim.Adam(self.model.parameters(),
                                          lr=self.lr, eps=self.opti_eps,
                                          weight_decay=self.weight_decay)

    def lr_decay(self, epoch):
        """
        Set the learning rate for an epoch (1-based): lr * decay ** ((epoch - 1) // decay_epochs).
        :param epoch: (int) current training epoch.

        :return lr: (float) the learning rate now in effect.
        """
        return update_step_schedule(self.optimizer, epoch, self.lr, self.lr_decay_rate, self.lr_decay_epochs)

    def get_probs(self, features):
        """
        Compute clip- and frame-level probabilities.
        :param features: (np.ndarray / torch.Tensor) B x T x F log-mel inputs.

        :return probs: (ProbabilitySet) model outputs.
        """
        return self.model(features)

    def state_dict(self):
        return {"model": self.model.state_dict(), "optimizer": self.optimizer.state_dict()}

    def load_state_dict(self, state):
        self.model.load_state_dict(state["model"])
        self.optimizer.load_state_dict(state["optimizer"])
