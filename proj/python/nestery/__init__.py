"""Python bindings for the nestery control plane.

Commands, status and market objects use the same JSON shapes as the HTTP API.
"""

import json
import os

from . import _nestery

__all__ = ["Error", "Node", "Market", "run_experiment", "calibrate", "overhead_pct"]


class Error(Exception):
    """A domain error. `code` is the error name, e.g. "AdmissionDenied"."""

    def __init__(self, code, detail=""):
        super().__init__(f"{code}({detail})" if detail else code)
        self.code = code
        self.detail = detail


def _call(fn, *args):
    try:
        return fn(*args)
    except _nestery.NativeError as e:
        raise Error(*e.args) from None


class Node:
    """A control-plane node whose state lives in `data_dir`."""

    def __init__(self, data_dir, root_capacity=None):
        cap = json.dumps(root_capacity) if root_capacity else ""
        self._node = _call(_nestery.Node, os.fspath(data_dir), cap)

    def execute(self, command, key=""):
        """Submit and apply one command; returns the command result."""
        return json.loads(_call(self._node.execute, json.dumps(command), key))

    def submit(self, command, key=""):
        return _call(self._node.submit, json.dumps(command), key)

    def process_pending(self):
        return json.loads(_call(self._node.process_pending))

    def tick(self, now=None):
        return json.loads(_call(self._node.tick, now))

    def status(self):
        return json.loads(_call(self._node.status))

    def message(self, msg_id):
        return json.loads(_call(self._node.message, msg_id))

    def capacity_violation(self):
        return self._node.capacity_violation()

    @property
    def now(self):
        return self._node.now


class Market:
    def __init__(self, node, state_file=None):
        self._market = _call(_nestery.Market, node._node, os.fspath(state_file) if state_file else "")
        self._node = node

    def ensure_user(self, user):
        _call(self._market.ensure_user, user)

    def register_offer(self, provider, offer):
        return json.loads(_call(self._market.register_offer, provider, json.dumps(offer)))

    def list_offers(self):
        return json.loads(_call(self._market.list_offers))

    def negotiate(self, consumer, offer_id):
        return json.loads(_call(self._market.negotiate, consumer, offer_id))

    def terminate(self, contract_id, caller):
        return json.loads(_call(self._market.terminate, contract_id, caller))

    def become_provider(self, user, profile, backing_vm):
        _call(self._market.become_provider, user, json.dumps(profile), backing_vm)

    def ledger(self, user):
        return json.loads(_call(self._market.ledger, user))

    def accrue(self):
        _call(self._market.accrue)

    def state(self):
        return json.loads(_call(self._market.state))


def run_experiment(mu, sigma=0.0, seed=1, warmup_peak=1.55, warmup_s=40.0, users=64, period_s=180,
                   think_s=1.0, slots=10):
    """Simulate the L0/L1/L2 benchmark; returns per-level stats and overheads."""
    return json.loads(_call(_nestery.run_experiment, mu, sigma, seed, warmup_peak, warmup_s, users,
                            period_s, think_s, slots))


def calibrate(avg, p80, p90):
    """Fit the L0 service-time distribution; returns (mu, sigma, residual)."""
    return _call(_nestery.calibrate, avg, p80, p90)


def overhead_pct(baseline_avg, subject_avg):
    return _call(_nestery.overhead_pct, baseline_avg, subject_avg)
