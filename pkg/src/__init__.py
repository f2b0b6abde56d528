# Swarm Leakage - Membership inference audits of decentralized swarm learning
__version__ = "0.1.0"
