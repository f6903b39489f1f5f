"""Utils package."""

from utils.errors import DistillError
