from .mlp import *

def load_model(name, **kwargs):
  model_dict = globals()
  model = model_dict[name](**kwargs)
  return model
