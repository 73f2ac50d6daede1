import argparse
import configparser
from pathlib import Path

COMMANDS = ("toy", "extract", "stats", "train", "predict", "evaluate", "rank", "compare")

# argument groups that map to sections of the .ini config file
SECTIONS = ("data", "features", "model", "df", "gl", "postprocess", "run")


def float_list(value):
    return tuple(float(v) for v in str(value).split(",") if v.strip())


def int_list(value):
    return tuple(int(v) for v in str(value).split(",") if v.strip())


def str_list(value):
    return tuple(v.strip() for v in str(value).split(",") if v.strip())


def get_config():
    """
    The configuration parser for common hyperparameters of all subcommands.

    Data parameters:
        --data_root <str>            directory holding manifest.tsv, the label files and audio/
        --features_dir <str>         feature store directory, by default <data_root>/features
        --classes <str>              "dcase" or a comma separated list of event classes
        --use_synthetic              add the weakened synthetic labels to the labeled training set
    Feature parameters:
        sample rate, mel bands, frame length / hop in ms, FFT size, number of frames
    Model parameters:
        channels of the PS-model and PT-model encoders
    DF parameters:
        --df_m <float>               floor fraction m of the DF dimension
        --df_r <list>                importance of clips with 1, 2, ... labels
        --no_df                      use the full feature space for every class
    GL parameters:
        --mode {atp_df, gl}, --gamma, --start_epoch, batch size, learning rate schedule, early stopping,
        input augmentation of the PT-model
    Post-processing parameters:
        --alpha, --beta, --durations, --fixed_window
    Run parameters:
        experiment name, seeds, device, logging, subcommand inputs and outputs
    """
    parser = argparse.ArgumentParser(
        description="glsed",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument(
        "command",
        type=str,
        choices=COMMANDS,
        help="pipeline step to run",
    )
    parser.add_argument(
        "--config",
        type=str,
        default=None,
        help=".ini file whose values replace the defaults below; command line flags still win",
    )

    # data parameters
    data = parser.add_argument_group("data")
    data.add_argument(
        "--data_root",
        type=str,
        default="data",
        help="directory holding manifest.tsv, the label files and the audio",
    )
    data.add_argument(
        "--features_dir",
        type=str,
        default=None,
        help="feature store directory; by default <data_root>/features",
    )
    data.add_argument("--manifest", type=str, default="manifest.tsv")
    data.add_argument("--weak_labels", type=str, default="weak.tsv")
    data.add_argument("--synthetic_labels", type=str, default="synthetic.tsv")
    data.add_argument("--validation_labels", type=str, default="validation.tsv")
    data.add_argument(
        "--classes",
        type=str,
        default="dcase",
        help='"dcase" for the 10 DCASE 2018 task 4 classes, or a comma separated class list',
    )
    data.add_argument(
        "--use_synthetic",
        action="store_true",
        default=False,
        help="by default False. If set, weakened synthetic labels join the labeled training set.",
    )

    # feature parameters
    features = parser.add_argument_group("features")
    features.add_argument("--sample_rate", type=int, default=44100)
    features.add_argument("--n_mels", type=int, default=64)
    features.add_argument("--frame_length_ms", type=float, default=40.0)
    features.add_argument("--hop_ms", type=float, default=20.0)
    features.add_argument("--fft_size", type=int, default=2048)
    features.add_argument(
        "--target_frames",
        type=int,
        default=500,
        help="every clip is padded or trimmed to this many frames",
    )

    # model parameters
    model = parser.add_argument_group("model")
    model.add_argument(
        "--ps_channels",
        type=int_list,
        default=(64, 128, 160),
        help="output channels of the three CNN blocks of the PS-model",
    )
    model.add_argument(
        "--pt_channels",
        type=int_list,
        default=(48, 64, 160),
        help="output channels of the three CNN blocks of the PT-model",
    )
    model.add_argument(
        "--use_orthogonal",
        action="store_false",
        default=True,
        help="Whether to use Orthogonal initialization for weights and 0 initialization for biases",
    )

    # disentangled feature parameters
    df = parser.add_argument_group("df")
    df.add_argument(
        "--df_m",
        type=float,
        default=0.04,
        help="share of the feature space every class keeps",
    )
    df.add_argument(
        "--df_r",
        type=float_list,
        default=(1.0,),
        help="comma separated importance of clips with 1, 2, ... labels",
    )
    df.add_argument(
        "--no_df",
        action="store_true",
        default=False,
        help="by default False. If set, every class uses all d dimensions.",
    )

    # guided learning parameters
    gl = parser.add_argument_group("gl")
    gl.add_argument(
        "--mode",
        type=str,
        default="gl",
        choices=["atp_df", "gl"],
        help="atp_df trains the PS-model on weak labels only; gl co-trains PS and PT",
    )
    gl.add_argument(
        "--gamma",
        type=float,
        default=0.99,
        help="decay of the PT-model's unsupervised weight, a = 1 - gamma^(epoch - start_epoch)",
    )
    gl.add_argument("--start_epoch", type=int, default=5, help="last epoch with a = 0")
    gl.add_argument("--batch_size", type=int, default=64)
    gl.add_argument("--lr", type=float, default=0.0018, help="learning rate (default: 0.0018)")
    gl.add_argument("--lr_decay", type=float, default=0.8, help="lr multiplier per decay step")
    gl.add_argument("--lr_decay_epochs", type=int, default=10, help="epochs per decay step")
    gl.add_argument(
        "--opti_eps",
        type=float,
        default=1e-8,
        help="Adam optimizer epsilon (default: 1e-8)",
    )
    gl.add_argument("--weight_decay", type=float, default=0)
    gl.add_argument(
        "--use_max_grad_norm",
        action="store_true",
        default=False,
        help="by default False. If set, clip gradients to --max_grad_norm.",
    )
    gl.add_argument("--max_grad_norm", type=float, default=10.0)
    gl.add_argument("--max_epochs", type=int, default=200)
    gl.add_argument(
        "--patience",
        type=int,
        default=20,
        help="stop after this many epochs without a better validation clip-level macro F1",
    )
    gl.add_argument("--max_shift", type=int, default=8, help="largest random time shift of g(x), in frames")
    gl.add_argument("--noise_std", type=float, default=0.1, help="std of the Gaussian noise of g(x)")
    gl.add_argument(
        "--no_augment",
        action="store_true",
        default=False,
        help="by default False. If set, the PT-model sees the same input as the PS-model.",
    )

    # post-processing parameters
    postprocess = parser.add_argument_group("postprocess")
    postprocess.add_argument("--alpha", type=float, default=0.5, help="decision threshold")
    postprocess.add_argument(
        "--beta",
        type=float,
        default=1.0 / 3,
        help="median window = average event duration * beta",
    )
    postprocess.add_argument(
        "--durations",
        type=str,
        default=None,
        help="average event durations TSV written by the stats command",
    )
    postprocess.add_argument(
        "--fixed_window",
        type=int,
        default=None,
        help="use this median window for every class instead of the adaptive plan",
    )

    # run parameters
    run = parser.add_argument_group("run")
    run.add_argument(
        "--experiment_name",
        type=str,
        default="check",
        help="an identifier to distinguish different experiment.",
    )
    run.add_argument("--results_dir", type=str, default="results")
    run.add_argument(
        "--seeds",
        type=int_list,
        default=(1,),
        help="comma separated seeds; one training run per seed",
    )
    run.add_argument(
        "--parallel_seeds",
        action="store_true",
        default=False,
        help="by default False. If set, seeds are trained in parallel processes.",
    )
    run.add_argument("--n_jobs", type=int, default=1, help="worker processes for extraction and parallel seeds")
    run.add_argument(
        "--cuda",
        action="store_true",
        default=False,
        help="by default False, will use CPU to train; or else will use GPU when available;",
    )
    run.add_argument(
        "--cuda_deterministic",
        action="store_false",
        default=True,
        help="by default, make sure random seed effective. if set, bypass such function.",
    )
    run.add_argument(
        "--n_training_threads",
        type=int,
        default=1,
        help="Number of torch threads for training",
    )
    run.add_argument("--log_level", type=str, default="INFO")
    run.add_argument("--quiet", action="store_true", default=False, help="disable progress bars")
    run.add_argument(
        "--resume",
        action="store_true",
        default=False,
        help="continue every run from its latest.pt",
    )

    # command inputs / outputs
    io = parser.add_argument_group("io")
    io.add_argument("--checkpoints", type=str, nargs="+", default=None, help="checkpoints to predict with")
    io.add_argument("--subset", type=str, default="validation", help="manifest subset to predict on")
    io.add_argument("--output", type=str, default=None, help="output file or directory")
    io.add_argument("--refs", type=str, default=None, help="strong reference TSV")
    io.add_argument("--preds", type=str, default=None, help="submission TSV to score")
    io.add_argument("--runs", type=str, nargs="+", default=None, help="run directories to rank")
    io.add_argument("--top_k", type=int, default=1)
    io.add_argument("--skip", type=int, default=0, help="number of best runs to leave out before taking top_k")
    io.add_argument(
        "--gammas",
        type=float_list,
        default=(1.0, 0.996, 0.99, 0.98),
        help="GL decays compared by the compare command",
    )
    io.add_argument("--toy_scale", type=float, default=1.0, help="multiplies every toy subset size")

    return parser


def _convert(action, value):
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        if value.lower() not in configparser.ConfigParser.BOOLEAN_STATES:
            raise ValueError(f"{action.dest}: expected true or false, got {value}")
        return configparser.ConfigParser.BOOLEAN_STATES[value.lower()]
    if action.type is not None:
        return action.type(value)
    return value


def load_config_file(parser, path):
    """
    Install the values of an .ini file as parser defaults.
    Keys are argparse destinations; boolean options hold the value itself (true/false).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file {path} not found")
    ini = configparser.ConfigParser()
    ini.read(path)
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for section in ini.sections():
        for key, value in ini.items(section):
            if key not in actions or key in ("command", "config"):
                raise ValueError(f"{path}: unknown option [{section}] {key}")
            defaults[key] = _convert(actions[key], value)
    parser.set_defaults(**defaults)


def parse_args(args, parser=None):
    parser = parser or get_config()
    known = parser.parse_known_args(args)[0]
    if known.config is not None:
        load_config_file(parser, known.config)
    return parser.parse_args(args)


def _format(action, value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return str(value)


def write_config_file(parser, all_args, path):
    """Snapshot of every option of the .ini sections, readable by load_config_file."""
    ini = configparser.ConfigParser()
    for group in parser._action_groups:
        if group.title not in SECTIONS:
            continue
        ini[group.title] = {}
        for action in group._group_actions:
            value = getattr(all_args, action.dest)
            if value is None:
                continue
            ini[group.title][action.dest] = _format(action, value)
    with open(path, "w") as f:
        ini.write(f)
