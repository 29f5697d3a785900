"""Engine metrics: solve counts by path, infeasible solves and day runs"""

from typing import Dict, Any
from collections import defaultdict
from datetime import datetime, timedelta
import logging
import threading

logger = logging.getLogger(__name__)


class MetricsCollector:
    """Collect and report engine metrics"""

    def __init__(self):
        self._lock = threading.Lock()
        self.metrics = defaultdict(list)
        self.counters = defaultdict(int)

    def record_solve(self, path: str, status: str, duration: float):
        """Record one intrinsic solve"""
        with self._lock:
            self.counters[f"solves_{path}"] += 1
            if status == "infeasible":
                self.counters["infeasible_solves"] += 1
            self.counters["solve_seconds_ms"] += int(duration * 1000)

    def record_day_run(self, strategy_id: str, duration: float, infeasible: int):
        """Record one rolling-intrinsic day run"""
        with self._lock:
            self.metrics["day_runs"].append({
                "strategy": strategy_id,
                "duration": duration,
                "infeasible": infeasible,
                "timestamp": datetime.utcnow(),
            })
            self.counters["total_day_runs"] += 1

    def record_request(self, endpoint: str, duration: float, status_code: int):
        """Record API request metrics"""
        with self._lock:
            self.metrics[f"request_{endpoint}"].append({
                "duration": duration,
                "status": status_code,
                "timestamp": datetime.utcnow(),
            })
            self.counters[f"requests_{endpoint}"] += 1
            if status_code >= 400:
                self.counters[f"errors_{endpoint}"] += 1

    def reset(self):
        with self._lock:
            self.metrics.clear()
            self.counters.clear()

    def get_summary(self) -> Dict[str, Any]:
        """Get metrics summary"""
        now = datetime.utcnow()
        hour_ago = now - timedelta(hours=1)

        with self._lock:
            day_runs = list(self.metrics["day_runs"])
            recent_requests = [
                m for key, metrics in self.metrics.items()
                if key.startswith("request_")
                for m in metrics
                if m.get("timestamp", now) > hour_ago
            ]
            counters = dict(self.counters)

        return {
            "solves_by_path": {
                k[len("solves_"):]: v for k, v in counters.items() if k.startswith("solves_")
            },
            "infeasible_solves": counters.get("infeasible_solves", 0),
            "total_day_runs": counters.get("total_day_runs", 0),
            "avg_day_run_seconds": (
                sum(r["duration"] for r in day_runs) / len(day_runs) if day_runs else 0
            ),
            "total_requests": sum(v for k, v in counters.items() if k.startswith("requests_")),
            "total_errors": sum(v for k, v in counters.items() if k.startswith("errors_")),
            "requests_last_hour": len(recent_requests),
            "avg_response_time_ms": (
                sum(m.get("duration", 0) for m in recent_requests) / len(recent_requests) * 1000
                if recent_requests else 0
            ),
        }


metrics_collector = MetricsCollector()
