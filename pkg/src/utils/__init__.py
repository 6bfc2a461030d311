# Utilities package initialization