"""Convert a trained Keras model into the lipcert interchange JSON.

Supported layers: Dense, Conv2D (channels_last), AveragePooling2D,
MaxPooling2D, Flatten, ReLU/softmax/linear activations (inline or as
standalone Activation layers).  Softmax outputs are dropped with a warning:
they have Lipschitz constant 1 and do not affect the bounds.  Weights are
upcast to float64 and transposed to the interchange layout (dense weights
(out, in); conv kernels (out_ch, in_ch, kh, kw)); inputs flatten row-major
(height, width, channel), which matches channels_last Flatten, so the
consumer never special-cases framework conventions.
"""

import json
from dataclasses import dataclass, field

import numpy as np


class UnsupportedLayer(Exception):
    """The model contains a layer kind the interchange cannot express."""


@dataclass
class ExportManifest:
    source: str
    layers: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def log(self, src_layer, mapped):
        self.layers.append({"from": src_layer, "to": mapped})

    def to_json(self) -> str:
        return json.dumps(
            {"source": self.source, "layers": self.layers, "warnings": self.warnings},
            indent=1,
        )


def _emit_activation(fn, out_layers, manifest, ctx):
    if fn in (None, "linear"):
        return
    if fn == "relu":
        out_layers.append({"kind": "activation", "fn": "relu"})
        manifest.log(ctx, "activation/relu")
    elif fn == "softmax":
        manifest.warnings.append(
            f"{ctx}: softmax dropped (Lipschitz constant 1, does not affect bounds)"
        )
    else:
        raise UnsupportedLayer(f"{ctx}: activation {fn!r} is not supported")


def _activation_name(layer):
    act = getattr(layer, "activation", None)
    return getattr(act, "__name__", None) if act is not None else None


def export_model(model) -> tuple:
    """(interchange document dict, ExportManifest) for a Keras model."""
    from keras import layers as kl

    manifest = ExportManifest(source="keras")
    shape = model.input_shape
    if shape[0] is not None:
        raise UnsupportedLayer("expected a batch input shape (None, ...)")
    dims = list(shape[1:])
    if len(dims) == 3:
        input_shape = [int(d) for d in dims]
    elif len(dims) == 1:
        input_shape = [int(dims[0])]
    else:
        raise UnsupportedLayer(f"unsupported input rank {len(dims)}")

    out_layers = []
    for layer in model.layers:
        name = f"{layer.name}({type(layer).__name__})"
        if isinstance(layer, kl.InputLayer):
            continue
        if isinstance(layer, kl.Dense):
            kernel, *rest = layer.get_weights()
            bias = rest[0] if rest else np.zeros(kernel.shape[1])
            out_layers.append(
                {
                    "kind": "dense",
                    "weight": kernel.T.astype(np.float64).tolist(),
                    "bias": bias.astype(np.float64).tolist(),
                }
            )
            manifest.log(name, "dense")
            _emit_activation(_activation_name(layer), out_layers, manifest, name)
        elif isinstance(layer, kl.Conv2D):
            if layer.data_format != "channels_last":
                raise UnsupportedLayer(f"{name}: only channels_last is supported")
            kernel, *rest = layer.get_weights()  # (kh, kw, in_ch, out_ch)
            bias = rest[0] if rest else np.zeros(kernel.shape[3])
            out_layers.append(
                {
                    "kind": "conv2d",
                    "kernel": kernel.transpose(3, 2, 0, 1).astype(np.float64).tolist(),
                    "bias": bias.astype(np.float64).tolist(),
                    "stride": [int(s) for s in layer.strides],
                    "padding": layer.padding,
                }
            )
            manifest.log(name, "conv2d")
            _emit_activation(_activation_name(layer), out_layers, manifest, name)
        elif isinstance(layer, (kl.AveragePooling2D, kl.MaxPooling2D)):
            kind = "avgpool2d" if isinstance(layer, kl.AveragePooling2D) else "maxpool2d"
            if layer.padding != "valid":
                raise UnsupportedLayer(f"{name}: only valid pooling is supported")
            out_layers.append(
                {
                    "kind": kind,
                    "pool": [int(p) for p in layer.pool_size],
                    "stride": [int(s) for s in (layer.strides or layer.pool_size)],
                }
            )
            manifest.log(name, kind)
        elif isinstance(layer, kl.Flatten):
            manifest.log(name, "(row-major flatten, implicit)")
        elif isinstance(layer, kl.Activation):
            _emit_activation(_activation_name(layer), out_layers, manifest, name)
        elif isinstance(layer, kl.Softmax):
            _emit_activation("softmax", out_layers, manifest, name)
        elif isinstance(layer, kl.ReLU):
            _emit_activation("relu", out_layers, manifest, name)
        else:
            raise UnsupportedLayer(f"{name}: layer kind is not supported")

    doc = {"name": model.name, "input_shape": input_shape, "layers": out_layers}
    return doc, manifest


def export_file(model_path, out_path) -> ExportManifest:
    import keras

    model = keras.models.load_model(model_path, compile=False)
    doc, manifest = export_model(model)
    with open(out_path, "w") as fh:
        json.dump(doc, fh, indent=1)
    return manifest
