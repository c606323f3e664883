"""
Estimation Server
單一觀測增量向量的 quasi-process 估計 HTTP 服務（/estimate）
"""
import logging

import numpy as np
from flask import Flask, jsonify, request
from flask_cors import CORS

from errors import ConfigError, NumericError, ParameterError, UnsupportedOperationError
from estimator import ContrastProblem, ThetaBox, fit
from experiment_config import FunctionalConfig, OptimizerConfig, build_section
from io_helpers import SERVER_HOST, SERVER_PORT, configure_logging
from quasi import QuasiEnsemble

logger = logging.getLogger(__name__)

app = Flask(__name__)

CORS(
    app,
    resources={r"/estimate": {"origins": "*"}},
    methods=["POST", "OPTIONS"],
    allow_headers=["Content-Type"]
)


def estimate_from_payload(data):
    """
    Quasi-process estimate for one observed increment vector.

    Body fields: increments, u, h, alpha, seed, functional, theta_bounds,
    optimizer, covariance.
    """
    increments = np.asarray(data.get("increments", []), dtype=float)
    if increments.ndim != 1 or increments.size == 0:
        raise ParameterError("increments must be a nonempty list of numbers")
    functional_cfg = build_section(FunctionalConfig, data.get("functional", {}), "functional.")
    optimizer_cfg = build_section(OptimizerConfig, data.get("optimizer", {}), "optimizer.")
    functional = functional_cfg.build()
    if data.get("theta_bounds") is not None:
        box = ThetaBox.from_pairs(data["theta_bounds"])
    else:
        box = functional_cfg.theta_box(functional)

    ensemble = QuasiEnsemble.sampled(increments, float(data.get("u", 0.0)), float(data.get("h", 1.0)),
                                     int(data.get("alpha", 100)), int(data.get("seed", 0)))
    result = fit(ContrastProblem(ensemble, functional, box), optimizer_cfg.to_options(),
                 covariance=bool(data.get("covariance", True)))
    return result.to_dict()


@app.route("/estimate", methods=["POST", "OPTIONS"])
def estimate():

    if request.method == "OPTIONS":
        return "", 200

    data = request.get_json(force=True, silent=True) or {}
    logger.info(
        "[POST /estimate] n=%d, alpha=%s, functional=%s",
        len(data.get("increments", []) or []), data.get("alpha", 100),
        (data.get("functional") or {}).get("kind", "dividend"),
    )

    try:
        return jsonify(estimate_from_payload(data))
    except (ParameterError, ConfigError, UnsupportedOperationError, TypeError, ValueError) as e:
        return jsonify({"error": str(e)}), 400
    except NumericError as e:
        return jsonify({"error": str(e)}), 422


@app.route("/")
def health():
    return "Quasi Estimation Server Running"


if __name__ == "__main__":
    configure_logging()
    logger.info("Starting Quasi Estimation Server on http://%s:%d", SERVER_HOST, SERVER_PORT)
    app.run(host=SERVER_HOST, port=SERVER_PORT, debug=False)
