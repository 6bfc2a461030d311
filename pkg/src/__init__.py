# Source package initialization