from .cli import pre

pre()
