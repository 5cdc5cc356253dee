"""Real-time backchanneling engine for task-oriented spoken assessments.

Subpackages cover the full path from raw PCM to timed backchannel
decisions: audio ingestion and framing (audio_io), prosodic features
(features), speaking-interval detection (sid), transcript auto-coding
(coder), the trainable numerical core (models), the proactive scoring
method (scoring), session orchestration (engine), and the streaming
service plus batch CLI (service, cli).
"""

__version__ = "0.1.0"
