"""Convolutional autoencoder with hand-derived backpropagation.

Encoder: two 5x5 convolution layers with 16 filters each (stride 1, zero
padding keeps feature maps at the input height x width), ReLU after each,
then one dense layer down to the latent length. Decoder mirrors it: dense
back up to h*w*16, ReLU, two more 5x5 convolution layers, sigmoid squashing
the output into [0, 1]. With stride 1 and same padding a transposed
convolution is an ordinary convolution with flipped kernels, so both
directions share one conv primitive.

Convolutions are evaluated as im2col matrix products; gradients are
derived by hand and cross-checked against central finite differences by
:func:`gradient_check`. Training runs Adam on the mean squared
reconstruction error.
"""

from dataclasses import dataclass, fields

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DivergedTrainingError, EmptyDatasetError, ShapeMismatchError

FILTERS = 16
KERNEL = 5

# Serialization / gradient order of the trainable arrays.
PARAM_FIELDS = (
    "conv1_w", "conv1_b",
    "conv2_w", "conv2_b",
    "enc_w", "enc_b",
    "dec_w", "dec_b",
    "deconv1_w", "deconv1_b",
    "deconv2_w", "deconv2_b",
)


@dataclass
class ModelParams:
    """All trainable weights plus the geometry they are shaped for."""

    width: int
    height: int
    channels: int
    latent_length: int
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    enc_w: np.ndarray
    enc_b: np.ndarray
    dec_w: np.ndarray
    dec_b: np.ndarray
    deconv1_w: np.ndarray
    deconv1_b: np.ndarray
    deconv2_w: np.ndarray
    deconv2_b: np.ndarray


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 400
    batch_size: int = 128
    learning_rate: float = 1e-3
    seed: int = 0
    latent_length: int = 64


def expected_shapes(width, height, channels, latent_length):
    """Array shapes for each entry of PARAM_FIELDS, in order."""
    d = width * height * FILTERS
    k = KERNEL
    return (
        (k, k, channels, FILTERS), (FILTERS,),
        (k, k, FILTERS, FILTERS), (FILTERS,),
        (d, latent_length), (latent_length,),
        (latent_length, d), (d,),
        (k, k, FILTERS, FILTERS), (FILTERS,),
        (k, k, FILTERS, channels), (channels,),
    )


def init_params(width, height, channels, latent_length, rng, dtype=np.float64):
    """Fan-in scaled Gaussian kernels, zero biases."""
    d = width * height * FILTERS
    k = KERNEL

    def draw(shape, fan_in, gain):
        return (rng.standard_normal(shape) * np.sqrt(gain / fan_in)).astype(dtype)

    return ModelParams(
        width=width, height=height, channels=channels, latent_length=latent_length,
        conv1_w=draw((k, k, channels, FILTERS), k * k * channels, 2.0),
        conv1_b=np.zeros(FILTERS, dtype=dtype),
        conv2_w=draw((k, k, FILTERS, FILTERS), k * k * FILTERS, 2.0),
        conv2_b=np.zeros(FILTERS, dtype=dtype),
        enc_w=draw((d, latent_length), d, 1.0),
        enc_b=np.zeros(latent_length, dtype=dtype),
        dec_w=draw((latent_length, d), latent_length, 2.0),
        dec_b=np.zeros(d, dtype=dtype),
        deconv1_w=draw((k, k, FILTERS, FILTERS), k * k * FILTERS, 2.0),
        deconv1_b=np.zeros(FILTERS, dtype=dtype),
        deconv2_w=draw((k, k, FILTERS, channels), k * k * FILTERS, 1.0),
        deconv2_b=np.zeros(channels, dtype=dtype),
    )


# ---------------------------------------------------------------------------
# activations

def _sigmoid(a):
    # clip keeps exp() in range; saturated values are exact 0/1 anyway
    return 1.0 / (1.0 + np.exp(-np.clip(a, -80.0, 80.0)))


_ACT_FORWARD = {
    "relu": lambda a: np.maximum(a, 0.0),
    "sigmoid": _sigmoid,
    "identity": lambda a: a,
}

# derivative expressed through the activation *output*
_ACT_BACKWARD = {
    "relu": lambda out, d: d * (out > 0),
    "sigmoid": lambda out, d: d * out * (1.0 - out),
    "identity": lambda out, d: d,
}


# ---------------------------------------------------------------------------
# conv primitive (stride 1, same zero padding, odd kernel)

def _conv2d(x, w):
    """x: (B, H, W, Cin), w: (k, k, Cin, Cout) -> (out, patches)."""
    b, hh, ww, cin = x.shape
    k = w.shape[0]
    p = k // 2
    xp = np.zeros((b, hh + 2 * p, ww + 2 * p, cin), dtype=x.dtype)
    xp[:, p:p + hh, p:p + ww, :] = x
    win = sliding_window_view(xp, (k, k), axis=(1, 2))        # (B,H,W,Cin,k,k)
    patches = win.transpose(0, 1, 2, 4, 5, 3).reshape(b * hh * ww, k * k * cin)
    out = patches @ w.reshape(k * k * cin, -1)
    return out.reshape(b, hh, ww, -1), patches


def _conv2d_backward(dout, patches, w, x_shape, need_dx=True):
    """Gradients of the same-padded conv; dx computed by convolving dout
    with the spatially flipped kernel (in/out channels swapped)."""
    b, hh, ww, cin = x_shape
    cout = w.shape[3]
    dmat = dout.reshape(b * hh * ww, cout)
    dw = (patches.T @ dmat).reshape(w.shape)
    db = dmat.sum(axis=0)
    dx = None
    if need_dx:
        wflip = np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2))
        dx, _ = _conv2d(dout, wflip)
    return dx, dw, db


# ---------------------------------------------------------------------------
# full autoencoder pass

def _check_images(images, params):
    x = np.asarray(images)
    if x.ndim == 2:
        x = x[:, :, np.newaxis]
    if x.ndim == 3:
        x = x[np.newaxis]
        single = True
    elif x.ndim == 4:
        single = False
    else:
        raise ShapeMismatchError(f"expected an image or image batch, got shape {x.shape}")
    want = (params.height, params.width, params.channels)
    if x.shape[1:] != want:
        raise ShapeMismatchError(f"image shape {x.shape[1:]} does not match model {want}")
    return x.astype(params.conv1_w.dtype, copy=False), single


def _forward(x, params, hidden_activation="relu", output_activation="sigmoid"):
    act = _ACT_FORWARD[hidden_activation]
    out_act = _ACT_FORWARD[output_activation]
    b = x.shape[0]
    d = params.height * params.width * FILTERS

    c1, p1 = _conv2d(x, params.conv1_w)
    a1 = act(c1 + params.conv1_b)
    c2, p2 = _conv2d(a1, params.conv2_w)
    a2 = act(c2 + params.conv2_b)
    flat = a2.reshape(b, d)
    latent = flat @ params.enc_w + params.enc_b

    h = act(latent @ params.dec_w + params.dec_b)
    h3 = h.reshape(b, params.height, params.width, FILTERS)
    c3, p3 = _conv2d(h3, params.deconv1_w)
    a3 = act(c3 + params.deconv1_b)
    c4, p4 = _conv2d(a3, params.deconv2_w)
    out = out_act(c4 + params.deconv2_b)

    cache = {
        "x": x, "p1": p1, "a1": a1, "p2": p2, "a2": a2, "flat": flat,
        "latent": latent, "h": h, "h3": h3, "p3": p3, "a3": a3, "p4": p4,
        "out": out, "hidden": hidden_activation, "output": output_activation,
    }
    return out, cache


def _backward(dout, cache, params):
    """Gradient of the loss w.r.t. every trainable array, given dL/dout."""
    act_back = _ACT_BACKWARD[cache["hidden"]]
    out_back = _ACT_BACKWARD[cache["output"]]
    b = dout.shape[0]
    grads = {}

    d4 = out_back(cache["out"], dout)
    dx4, grads["deconv2_w"], grads["deconv2_b"] = _conv2d_backward(
        d4, cache["p4"], params.deconv2_w, cache["a3"].shape)
    d3 = act_back(cache["a3"], dx4)
    dh3, grads["deconv1_w"], grads["deconv1_b"] = _conv2d_backward(
        d3, cache["p3"], params.deconv1_w, cache["h3"].shape)

    dh = act_back(cache["h"], dh3.reshape(b, -1))
    grads["dec_w"] = cache["latent"].T @ dh
    grads["dec_b"] = dh.sum(axis=0)
    dlatent = dh @ params.dec_w.T

    grads["enc_w"] = cache["flat"].T @ dlatent
    grads["enc_b"] = dlatent.sum(axis=0)
    dflat = dlatent @ params.enc_w.T

    d2 = act_back(cache["a2"], dflat.reshape(cache["a2"].shape))
    dx2, grads["conv2_w"], grads["conv2_b"] = _conv2d_backward(
        d2, cache["p2"], params.conv2_w, cache["a1"].shape)
    d1 = act_back(cache["a1"], dx2)
    _, grads["conv1_w"], grads["conv1_b"] = _conv2d_backward(
        d1, cache["p1"], params.conv1_w, cache["x"].shape, need_dx=False)
    return grads


# ---------------------------------------------------------------------------
# public operations

def encode(image, params, hidden_activation="relu"):
    """Image (h, w, c) -> latent vector of length ``params.latent_length``.

    A batch (B, h, w, c) maps to (B, L). Deterministic; conv -> activation
    -> conv -> activation -> flatten -> dense, no activation on the latent.
    """
    x, single = _check_images(image, params)
    act = _ACT_FORWARD[hidden_activation]
    a1 = act(_conv2d(x, params.conv1_w)[0] + params.conv1_b)
    a2 = act(_conv2d(a1, params.conv2_w)[0] + params.conv2_b)
    latent = a2.reshape(x.shape[0], -1) @ params.enc_w + params.enc_b
    return latent[0] if single else latent


def decode(latent, params, hidden_activation="relu", output_activation="sigmoid"):
    """Latent vector(s) back to image(s) with values squashed into [0, 1]."""
    z = np.asarray(latent, dtype=params.dec_w.dtype)
    single = z.ndim == 1
    if single:
        z = z[np.newaxis]
    if z.ndim != 2 or z.shape[1] != params.latent_length:
        raise ShapeMismatchError(
            f"latent shape {np.shape(latent)} does not match length {params.latent_length}")
    act = _ACT_FORWARD[hidden_activation]
    out_act = _ACT_FORWARD[output_activation]
    h = act(z @ params.dec_w + params.dec_b)
    h3 = h.reshape(z.shape[0], params.height, params.width, FILTERS)
    a3 = act(_conv2d(h3, params.deconv1_w)[0] + params.deconv1_b)
    out = out_act(_conv2d(a3, params.deconv2_w)[0] + params.deconv2_b)
    return out[0] if single else out


def reconstruction_loss(images, params, hidden_activation="relu",
                        output_activation="sigmoid"):
    """Mean squared reconstruction error of a batch."""
    x, _ = _check_images(images, params)
    out, _ = _forward(x, params, hidden_activation, output_activation)
    return float(np.mean((out - x) ** 2))


def loss_and_grads(images, params, hidden_activation="relu",
                   output_activation="sigmoid"):
    """Reconstruction loss plus its gradient w.r.t. every trainable array."""
    x, _ = _check_images(images, params)
    out, cache = _forward(x, params, hidden_activation, output_activation)
    diff = out - x
    loss = float(np.mean(diff ** 2))
    dout = (2.0 / diff.size) * diff
    return loss, _backward(dout, cache, params)


def train(dataset, config, rng=None, dtype=np.float32):
    """Adam on mean squared reconstruction error.

    ``rng`` drives initialization and batch sampling; when omitted it is
    derived from ``config.seed``. Returns ``(params, loss_history)`` with
    one loss entry per iteration (evaluated at the pre-update parameters).
    Internals default to float32 for speed; checkpoints are stored as
    float64 regardless.
    """
    imgs = _stack_dataset(dataset)
    if config.iterations < 1:
        raise ValueError("iterations must be >= 1")
    if config.learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    imgs = imgs.astype(dtype, copy=False)
    n, h, w, c = imgs.shape
    params = init_params(w, h, c, config.latent_length, rng, dtype=dtype)

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m = {f: np.zeros_like(getattr(params, f)) for f in PARAM_FIELDS}
    v = {f: np.zeros_like(getattr(params, f)) for f in PARAM_FIELDS}
    history = np.empty(config.iterations, dtype=np.float64)

    for step in range(config.iterations):
        batch = imgs[rng.integers(0, n, config.batch_size)]
        loss, grads = loss_and_grads(batch, params)
        if not np.isfinite(loss):
            raise DivergedTrainingError(f"loss became {loss} at step {step}")
        history[step] = loss
        t = step + 1
        lr_t = config.learning_rate * np.sqrt(1.0 - beta2 ** t) / (1.0 - beta1 ** t)
        for f in PARAM_FIELDS:
            g = grads[f]
            m[f] = beta1 * m[f] + (1.0 - beta1) * g
            v[f] = beta2 * v[f] + (1.0 - beta2) * g * g
            arr = getattr(params, f)
            arr -= (lr_t * m[f] / (np.sqrt(v[f]) + eps)).astype(arr.dtype, copy=False)

    for f in PARAM_FIELDS:
        if not np.all(np.isfinite(getattr(params, f))):
            raise DivergedTrainingError(f"parameter {f} became non-finite")
    return params, history


def _stack_dataset(dataset):
    if isinstance(dataset, np.ndarray):
        imgs = dataset
    else:
        items = list(dataset)
        if not items:
            raise EmptyDatasetError("dataset contains no images")
        shapes = {np.shape(im) for im in items}
        if len(shapes) != 1:
            raise ShapeMismatchError(f"dataset images disagree on shape: {sorted(shapes)}")
        imgs = np.stack([np.asarray(im) for im in items])
    if imgs.ndim == 3:
        imgs = imgs[:, :, :, np.newaxis]
    if imgs.ndim != 4 or imgs.shape[0] == 0:
        raise EmptyDatasetError(f"expected a non-empty image stack, got shape {imgs.shape}")
    return imgs


def gradient_check(params, image, epsilon=1e-6, num_coords=200, rng=None,
                   hidden_activation="relu", output_activation="sigmoid",
                   analytic_grads=None):
    """Max relative error between backprop and central finite differences.

    Samples ``num_coords`` parameter coordinates across all arrays and
    compares the analytic gradient against
    ``(L(p + eps) - L(p - eps)) / (2 eps)`` at double precision.
    ``analytic_grads`` may be supplied to audit an externally produced
    gradient (e.g. a deliberately corrupted one).
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon must be in [1e-7, 1e-3], got {epsilon}")
    if rng is None:
        rng = np.random.default_rng(0)
    params = _to_dtype(params, np.float64)
    x = np.asarray(image, dtype=np.float64)

    if analytic_grads is None:
        _, analytic_grads = loss_and_grads(x, params, hidden_activation, output_activation)

    sizes = [getattr(params, f).size for f in PARAM_FIELDS]
    offsets = np.cumsum([0] + sizes)
    total = offsets[-1]
    picks = rng.choice(total, size=min(num_coords, total), replace=False)

    worst = 0.0
    for flat in np.sort(picks):
        fi = int(np.searchsorted(offsets, flat, side="right") - 1)
        field = PARAM_FIELDS[fi]
        idx = int(flat - offsets[fi])
        arr = getattr(params, field)
        orig = arr.flat[idx]
        arr.flat[idx] = orig + epsilon
        lp = reconstruction_loss(x, params, hidden_activation, output_activation)
        arr.flat[idx] = orig - epsilon
        lm = reconstruction_loss(x, params, hidden_activation, output_activation)
        arr.flat[idx] = orig
        numeric = (lp - lm) / (2.0 * epsilon)
        analytic = float(np.asarray(analytic_grads[field]).flat[idx])
        denom = max(abs(analytic), abs(numeric))
        if denom < 1e-10:
            continue  # both effectively zero
        worst = max(worst, abs(analytic - numeric) / denom)
    return worst


def _to_dtype(params, dtype):
    """Copy of params with every array cast to ``dtype``."""
    kwargs = {}
    for f in fields(ModelParams):
        value = getattr(params, f.name)
        if isinstance(value, np.ndarray):
            value = value.astype(dtype)
        kwargs[f.name] = value
    return ModelParams(**kwargs)
