import json

import numpy as np
import pandas as pd
from scipy.spatial.transform import Rotation

from .version import __version__

TWO_PI = 2 * np.pi

#: tasklogger logger name shared by every module
LOGGER = "rydising"


def mhz_to_angular(nu):
    """Convert a frequency in MHz to an angular frequency in rad/us."""
    return TWO_PI * np.asarray(nu, dtype=float)


def angular_to_mhz(omega):
    """Convert an angular frequency in rad/us to MHz."""
    return np.asarray(omega, dtype=float) / TWO_PI


def angular_to_khz(omega):
    """Convert an angular frequency in rad/us to kHz."""
    return 1e3 * np.asarray(omega, dtype=float) / TWO_PI


def bloch_vector(theta, phi=0.0):
    """Unit Bloch vector of sin(theta/2)|dn> + exp(i phi) cos(theta/2)|up>.

    Parameters
    ----------
    theta : float or array-like
        Polar tilt from |up>.
    phi : float or array-like, optional, default: 0
        Phase of the |up> amplitude.

    Returns
    -------
    vector : np.ndarray, shape=[..., 3]
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return np.stack(
        np.broadcast_arrays(
            np.sin(theta) * np.cos(phi),
            -np.sin(theta) * np.sin(phi),
            np.cos(theta),
        ),
        axis=-1,
    )


def bloch_phase(vector):
    """Phase phi of a Bloch vector in the |theta, phi> notation."""
    vector = np.asarray(vector, dtype=float)
    return -np.arctan2(vector[..., 1], vector[..., 0])


def axis_vector(axis_phase):
    """Equatorial unit vector at azimuth `axis_phase` (0 is +x)."""
    return np.array([np.cos(axis_phase), np.sin(axis_phase), 0.0])


def rotate(vectors, axis, angle):
    """Right-handed rotation of one or many 3-vectors about a fixed axis."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    rotation = Rotation.from_rotvec(angle * axis)
    vectors = np.asarray(vectors, dtype=float)
    return rotation.apply(vectors.reshape(-1, 3)).reshape(vectors.shape)


def rotate_z(vectors, angles):
    """Rotate each row of `vectors` about +z by its own angle."""
    vectors = np.asarray(vectors, dtype=float)
    cos, sin = np.cos(angles), np.sin(angles)
    out = np.empty_like(vectors)
    out[..., 0] = cos * vectors[..., 0] - sin * vectors[..., 1]
    out[..., 1] = sin * vectors[..., 0] + cos * vectors[..., 1]
    out[..., 2] = vectors[..., 2]
    return out


def provenance(config=None):
    """Metadata block embedded in every emitted dataset."""
    return {"version": __version__, "config": config}


def write_table(frame, path, config=None):
    """Write a headered tab-separated table preceded by provenance comments.

    Output is byte-identical for identical input, so tables can be
    compared as golden files.
    """
    if not isinstance(frame, pd.DataFrame):
        raise TypeError("frame must be a pandas.DataFrame. Got {}".format(type(frame)))
    with open(path, "w", newline="\n") as handle:
        handle.write("# rydising {}\n".format(__version__))
        handle.write(
            "# config: {}\n".format(json.dumps(config, sort_keys=True, default=_jsonify))
        )
        frame.to_csv(handle, sep="\t", index=False, float_format="%.10g")
    return path


def write_json(document, path, config=None):
    """Write a summary document with embedded provenance."""
    document = dict(document)
    document["provenance"] = provenance(config)
    with open(path, "w", newline="\n") as handle:
        json.dump(document, handle, indent=2, sort_keys=True, default=_jsonify)
        handle.write("\n")
    return path


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError("Object of type {} is not JSON serializable".format(type(obj)))
