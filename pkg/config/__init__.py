# Configuration package initialization