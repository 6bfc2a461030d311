# Data models package initialization