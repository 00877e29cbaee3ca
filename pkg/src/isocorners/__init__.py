"""Corner features on maximally stable iso-intensity curve segments."""
