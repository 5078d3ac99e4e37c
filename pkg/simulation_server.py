#!/usr/bin/env python3
"""
Simulation API Server
REST front end for parameter checks, compressor tests and small runs.
Request bodies use the same dotted keys as the config files.
"""

import logging

from flask import Flask, jsonify, request
from flask_cors import CORS

import expcli
from sim_errors import ConfigError, SimulationError, error_type

logger = logging.getLogger(__name__)

SERVICE_NAME = 'CC-DQM Simulation Server'
VERSION = '1.0.0'
DEFAULT_PORT = 5010
MAX_SERVER_ITER = 5000

app = Flask(__name__)
CORS(app)


def _error(e: Exception, status: int):
    return jsonify({'error': str(e), 'type': error_type(e)}), status


def _status_for(e: Exception) -> int:
    # argument errors are the caller's fault
    return 400 if isinstance(e, (ValueError, ConfigError)) else 500


def _config_from_body(data) -> expcli.ExperimentConfig:
    """Accepts {"config": "<key = value text>"} and/or {"keys": {...}}"""
    if data is None:
        raise ConfigError("request body must be JSON")
    values = {}
    if 'config' in data:
        values.update(expcli.parse_config_text(str(data['config'])))
    values.update({k: str(v) for k, v in (data.get('keys') or {}).items()})
    return expcli.load_config(None, values)


@app.route('/health', methods=['GET'])
def health_check():
    """서버 상태 확인"""
    return jsonify({
        'status': 'healthy',
        'service': SERVICE_NAME,
        'version': VERSION,
    })


@app.route('/check-params', methods=['POST'])
def check_params():
    """
    Feasibility report for the posted configuration

    Request Body:
    {
        "keys": {"graph.source": "complete", "graph.n": 3, "algorithm.c": 50}
    }
    """
    try:
        cfg = _config_from_body(request.get_json(silent=True))
        problem = expcli.build_problem(cfg)
        report = expcli.check_params(cfg, problem, strict=False)
        if report is None:
            return jsonify({'pass': False, 'error': 'objective constants unavailable'})
        return jsonify(report.to_dict())
    except (SimulationError, ValueError) as e:
        return _error(e, _status_for(e))
    except Exception as e:
        logger.exception("check-params failed")
        return _error(e, 500)


@app.route('/compress-test', methods=['POST'])
def compress_test():
    """
    Request Body:
    {"compressor": "det_quant", "bits": 2, "top_k": 1, "dim": 24, "trials": 1000, "seed": 0}
    """
    try:
        data = request.get_json(silent=True) or {}
        result = expcli.compress_test(
            str(data.get('compressor', 'det_quant')),
            int(data.get('dim', 24)),
            bits=int(data.get('bits', 2)),
            k=int(data.get('top_k', 1)),
            trials=int(data.get('trials', 1000)),
            seed=int(data.get('seed', 0)),
        )
        return jsonify(result)
    except (SimulationError, ValueError) as e:
        return _error(e, _status_for(e))
    except Exception as e:
        logger.exception("compress-test failed")
        return _error(e, 500)


@app.route('/run', methods=['POST'])
def run():
    """
    Runs one configuration in memory and returns the final metrics

    Request Body:
    {"keys": {...}, "max_iter": 200}
    """
    try:
        data = request.get_json(silent=True)
        cfg = _config_from_body(data)
        if 'max_iter' in data:
            max_iter = int(data['max_iter'])
            if not (0 <= max_iter <= MAX_SERVER_ITER):
                raise ConfigError(f"must lie in [0, {MAX_SERVER_ITER}]", key='max_iter')
            cfg = cfg.with_overrides({'run.max_iter': str(max_iter)})
        result = expcli.run_experiment(cfg, write=False)
        record = result.records[0]
        final = record.final
        return jsonify({
            'variant': record.meta['variant'],
            'stop_reason': record.meta['stop_reason'],
            'iterations': final.iter,
            'err': float(result.mean['err'].iloc[-1]),
            'bits_cum': final.bits_cum,
            'rounds_cum': final.rounds_cum,
            'feasible': None if result.report is None else result.report.passed,
            'err_series': [float(v) for v in result.mean['err']],
        })
    except (SimulationError, ValueError) as e:
        return _error(e, _status_for(e))
    except Exception as e:
        logger.exception("run failed")
        return _error(e, 500)


def main(host: str = '0.0.0.0', port: int = DEFAULT_PORT) -> None:
    print("=" * 50)
    print(f"🛰️  {SERVICE_NAME}")
    print("=" * 50)
    print(f"포트: {port}")
    print("=" * 50)
    print("엔드포인트:")
    print("  GET  /health         - 서버 상태")
    print("  POST /check-params   - 파라미터 수렴 조건 검사")
    print("  POST /compress-test  - 압축기 delta / bias 측정")
    print("  POST /run            - 소규모 시뮬레이션 실행")
    print("=" * 50)
    app.run(host=host, port=port, debug=False, threaded=True)


if __name__ == '__main__':
    expcli.setup_logging()
    main()
