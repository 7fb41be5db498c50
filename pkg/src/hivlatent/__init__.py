"""Within-host HIV dynamics with a latent reservoir."""
